import json

import pytest

from dreamplan.config import default_config, from_dict, loads, locate_lines
from dreamplan.errors import ConfigurationError

MINIMAL = {"config_version": 1, "task": {"name": "push-to-goal"}}


def test_minimal_config_defaults():
    cfg = from_dict(MINIMAL)
    assert cfg.backend == "analytic-push"
    assert cfg.solver.num_samples == 8 and cfg.solver.cage_weight == 0.1
    assert cfg.dris.m == 8 and cfg.dris.width == "medium"
    assert cfg.horizon == cfg.task.step_budget
    assert cfg.cage is None


def test_catch_defaults_to_ballistic_backend_with_drag():
    cfg = from_dict({"config_version": 1, "task": {"name": "catch-ball"}})
    assert cfg.backend == "analytic-ballistic"
    assert cfg.dris.context.drag_coeff > 0


def test_to_dict_roundtrip_and_hash():
    cfg = default_config("push-follow-circle", chunk_length=4)
    cfg.cage = {"kind": "geometric", "center": [0, 0], "radius": 0.3}
    again = from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again.to_dict() == cfg.to_dict()
    assert again.hash() == cfg.hash()
    again.chunk_length = 5
    assert again.hash() != cfg.hash()


def test_baseline_flag():
    cfg = default_config("push-to-goal")
    assert not cfg.baseline
    assert cfg.as_baseline().baseline
    assert not cfg.baseline  # as_baseline copies


def test_error_reports_path_and_line():
    text = """{
  "config_version": 1,
  "task": {"name": "push-to-goal"},
  "solver": {
    "num_samples": 0
  }
}"""
    with pytest.raises(ConfigurationError) as exc:
        loads(text)
    assert exc.value.path == "solver.num_samples"
    assert exc.value.line == 5
    assert "line 5" in str(exc.value)


def test_semantic_error_reports_line():
    text = """{
  "config_version": 1,
  "task": {"name": "push-to-goal"},
  "cage": {"kind": "plate"}
}"""
    with pytest.raises(ConfigurationError) as exc:
        loads(text)
    assert exc.value.path == "cage.kind" and exc.value.line == 4


def test_unknown_field_rejected():
    with pytest.raises(ConfigurationError):
        from_dict({**MINIMAL, "dris": {"m": 8, "bogus": 1}})


def test_bad_json_reports_line():
    with pytest.raises(ConfigurationError) as exc:
        loads('{\n  "task": \n}')
    assert exc.value.line == 3


@pytest.mark.parametrize("patch,path", [
    ({"task": {"name": "stack-cubes"}}, "task.name"),
    ({"dris": {"width": [2.0, 1.0]}}, "dris.width"),
    ({"perturbation": {"physics_severity": 2}}, "perturbation.physics_severity"),
    ({"tsip": {"backend": "mujoco"}}, "tsip.backend"),
    ({"solver": {"sampler": {"kind": "discrete-set"}}}, "solver.sampler.actions"),
])
def test_invalid_fields(patch, path):
    with pytest.raises(ConfigurationError) as exc:
        from_dict({**MINIMAL, **patch})
    assert exc.value.path == path


def test_locate_lines_nested():
    text = '{\n "a": [1,\n  {"b": 2}],\n "c": "x"\n}'
    lines = locate_lines(text)
    assert lines[("a",)] == 2
    assert lines[("a", 1, "b")] == 3
    assert lines[("c",)] == 4
