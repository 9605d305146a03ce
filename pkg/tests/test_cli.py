from __future__ import annotations

import json

import pytest

from demoplan.cli import main


def _run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_pipeline_end_to_end(tmp_path, capsys):
    d = str(tmp_path)
    assert _run(capsys, "synth", "--task", "cable", "--out", d, "--seed", "1")[0] == 0
    assert _run(capsys, "segment", "--demo", f"{d}/demo.json", "--out", d)[0] == 0
    segs = json.loads((tmp_path / "segments.json").read_text())["segments"]
    assert segs[0]["status"] == "idle" and segs[0]["t_start"] == 0.0
    code, _, err = _run(capsys, "analyze", "--demo", f"{d}/demo.json", "--out", d, "--verbose")
    assert code == 0
    assert "[segment]" in err and "[ground]" in err
    assert (tmp_path / "domain.pddl").read_text().startswith("(define (domain")
    assert _run(capsys, "plan", "--demo-plan", f"{d}/demo_plan.json", "--out", d, "--seed", "4")[0] == 0
    assert _run(capsys, "exec", "--plan", f"{d}/task_plan.json", "--out", d, "--seed", "4")[0] == 0
    result = json.loads((tmp_path / "exec_result.json").read_text())
    assert result["executable"] and result["task_success"]


def test_cap_scene_file(tmp_path, capsys):
    from demoplan.sim import random_scene

    scene = tmp_path / "scene.json"
    scene.write_text(json.dumps(random_scene("cap", 2).to_dict()))
    d = str(tmp_path)
    assert _run(capsys, "synth", "--task", "cap", "--out", d)[0] == 0
    assert _run(capsys, "analyze", "--demo", f"{d}/demo.json", "--out", d)[0] == 0
    assert _run(capsys, "plan", "--demo-plan", f"{d}/demo_plan.json", "--scene", str(scene), "--out", d)[0] == 0
    plan = json.loads((tmp_path / "task_plan.json").read_text())
    assert [s["skill"] for s in plan["steps"]].count("tighten") == 2


def test_analyze_mock_without_demo(tmp_path, capsys):
    assert _run(capsys, "analyze", "--backend", "mock", "--out", str(tmp_path))[0] == 0
    plan = json.loads((tmp_path / "demo_plan.json").read_text())
    assert [s["skill"] for s in plan["steps"]] == ["move_object", "grasp", "stretch", "insert", "open_hand"]


def test_error_is_json_with_stage(tmp_path, capsys):
    code, _, err = _run(capsys, "segment", "--demo", str(tmp_path / "missing.json"))
    assert code == 1
    doc = json.loads(err)
    assert doc["stage"] == "segment" and doc["error"] == "FileNotFoundError"


def test_ablated_analysis_reports_validation(tmp_path, capsys):
    d = str(tmp_path)
    _run(capsys, "synth", "--out", d)
    code, _, err = _run(capsys, "analyze", "--demo", f"{d}/demo.json", "--group", "A", "--out", d)
    doc = json.loads(err)
    assert code == 1 and doc["error"] == "InvalidSequence" and "validation" in doc


def test_remote_without_endpoint(tmp_path, capsys, monkeypatch):
    monkeypatch.delenv("ANALYZER_ENDPOINT", raising=False)
    d = str(tmp_path)
    _run(capsys, "synth", "--out", d)
    code, _, err = _run(capsys, "analyze", "--demo", f"{d}/demo.json", "--backend", "remote", "--out", d)
    assert code == 1 and json.loads(err)["error"] == "RemoteUnavailable"


def test_eval_is_byte_deterministic(tmp_path, capsys):
    for sub in ("a", "b"):
        code, out, _ = _run(capsys, "eval", "--group", "ours", "--task", "cap", "--n", "3", "--seed", "5",
                            "--out", str(tmp_path / sub))
        assert code == 0 and out.startswith("group,task,")
    assert (tmp_path / "a" / "eval.csv").read_bytes() == (tmp_path / "b" / "eval.csv").read_bytes()


def test_config_override(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text('{"eval": {"n_scenes": 2}}')
    code, out, _ = _run(capsys, "eval", "--group", "C", "--task", "cable", "--config", str(cfg),
                        "--out", str(tmp_path))
    assert code == 0 and out.count("\n") == 2


def test_usage_error_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["fly"])
    assert exc.value.code == 2


def test_ground_matches_analysis(tmp_path, capsys):
    d = str(tmp_path)
    _run(capsys, "synth", "--out", d)
    _run(capsys, "segment", "--demo", f"{d}/demo.json", "--out", d)
    _run(capsys, "analyze", "--demo", f"{d}/demo.json", "--out", d, "--domain-out", f"{d}/pddl/cable.pddl")
    assert (tmp_path / "pddl" / "cable.pddl").exists()
    groundings = json.loads((tmp_path / "demo_plan.json").read_text())["groundings"]
    code, out, _ = _run(capsys, "ground", "--trace", f"{d}/demo_wrench.csv", "--segments", f"{d}/segments.json",
                        "--skill", "insert", "--index", "1", "--out", d)
    assert code == 0
    assert json.loads(out)["threshold"] == pytest.approx(groundings["insert@clip_U"], abs=1e-6)
    code, _, err = _run(capsys, "ground", "--trace", f"{d}/demo_wrench.csv", "--segments", f"{d}/segments.json",
                        "--skill", "insert", "--index", "5", "--out", d)
    assert code == 1 and json.loads(err)["stage"] == "ground"
