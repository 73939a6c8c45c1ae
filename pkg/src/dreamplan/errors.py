class DreamplanError(Exception):
    pass


class ConfigurationError(DreamplanError, ValueError):
    """Invalid configuration; ``path`` names the offending field when known."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.message = message
        self.path = path
        self.line = line
        where = ""
        if path:
            where += f"{path}: "
        if line is not None:
            where = f"line {line}: " + where
        super().__init__(where + message)


class ActionBoundsError(DreamplanError, ValueError):
    pass


class EpisodeStateError(DreamplanError, RuntimeError):
    """Operation not allowed in the current episode state."""
