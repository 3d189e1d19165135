"""CLI behavior: output shapes, exit codes, stage chaining."""

import json
from pathlib import Path

import pytest

from histoseq.cli import main


def test_scan_prints_visit_lines(capsys):
    assert main(["scan", "--rows", "2", "--cols", "3", "--strategy", "scan2"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines == ["0,0", "0,1", "0,2", "1,2", "1,1", "1,0"]
    assert lines[-1] == "1,0"


def test_flops_prints_table_and_json(capsys):
    code = main(["flops", "--input-size", "1024", "--hidden", "2000", "--classes", "3"])
    assert code == 0
    out = capsys.readouterr().out
    assert "48412000" in out
    json_start = out.index("{")
    report = json.loads(out[json_start:])
    assert report["total"] == 48_412_000
    assert report["bilstm_params"] == 48_400_000


def test_usage_errors_exit_1(capsys):
    assert main(["no-such-command"]) == 1
    assert main(["scan", "--rows", "2"]) == 1  # missing --cols
    err = capsys.readouterr().err
    assert "error" in err


def test_bad_strategy_exit_1(capsys):
    assert main(["scan", "--rows", "2", "--cols", "2", "--strategy", "spiral"]) == 1
    assert "spiral" in capsys.readouterr().err


def test_request_shape_rejection_exits_1(capsys):
    assert main(["flops", "--input-size", "0", "--hidden", "4", "--classes", "2"]) == 1


def test_missing_artifact_exit_1_names_stage(tmp_path, capsys):
    assert main(["tile", "--workspace", str(tmp_path)]) == 1
    assert "extract-regions stage" in capsys.readouterr().err


def test_missing_manifest_before_train_names_extract_features(tmp_path, capsys):
    assert main(["train", "--workspace", str(tmp_path)]) == 1
    assert "extract-features stage" in capsys.readouterr().err


def test_data_error_exit_2(tmp_path, capsys):
    from PIL import Image
    import numpy as np

    image_path = tmp_path / "s.png"
    Image.fromarray(np.zeros((40, 40, 3), dtype=np.uint8)).save(image_path)
    xml_path = tmp_path / "broken.xml"
    xml_path.write_bytes(b"<ASAP_Annotations><unclosed")
    code = main(
        ["extract-regions", "--workspace", str(tmp_path / "ws"),
         "--xml", str(xml_path), "--image", str(image_path)]
    )
    assert code == 2
    assert "byte offset" in capsys.readouterr().err


def test_unreachable_server_exit_1(capsys):
    code = main(["--server", "http://127.0.0.1:1", "scan", "--rows", "1", "--cols", "1"])
    assert code == 1
    assert "request failed" in capsys.readouterr().err


def test_stage_chain_through_cli(demo_slide, tmp_path, capsys):
    xml_path, image_path, config_path = demo_slide
    ws = str(tmp_path / "ws")
    common = ["--workspace", ws, "--config", str(config_path)]
    assert main(["extract-regions", *common, "--xml", str(xml_path),
                 "--image", str(image_path)]) == 0
    assert main(["tile", *common]) == 0
    assert main(["extract-features", *common]) == 0
    assert main(["train", *common]) == 0
    assert main(["evaluate", *common]) == 0
    out = capsys.readouterr().out
    # stdout carries machine-readable stage summaries
    assert '"accuracy"' in out
    assert (Path(ws) / "reports" / "evaluate.json").exists()
    assert (Path(ws) / "reports" / "evaluate.txt").exists()
    assert main(["cross-validate", *common]) == 0
    assert (Path(ws) / "reports" / "cross_validate.json").exists()


def test_run_all_through_cli(demo_slide, tmp_path, capsys):
    xml_path, image_path, config_path = demo_slide
    ws = str(tmp_path / "ws")
    code = main(
        ["run-all", "--workspace", ws, "--config", str(config_path),
         "--xml", str(xml_path), "--image", str(image_path)]
    )
    assert code == 0
    body = json.loads(capsys.readouterr().out)
    assert set(body["stages"]) == {
        "extract-regions", "tile", "extract-features", "train", "evaluate", "cross-validate"
    }
