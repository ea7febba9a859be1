import json
import xml.etree.ElementTree as ET

import jsonschema
import numpy as np
import pytest

import skelfit as sf
from skelfit.cli import main

from conftest import philox, segment_cloud


def _schema(name):
    import importlib.resources as res

    with res.files("skelfit.schemas").joinpath(name).open("r") as fh:
        return json.load(fh)


def validate(instance, schema_name):
    schema = _schema(schema_name)
    if schema_name == "report.schema.json":
        schema["properties"]["skeleton"] = _schema("skeleton.schema.json")
    jsonschema.validate(instance, schema)


@pytest.fixture()
def segment_files(tmp_path):
    cloud, _ = segment_cloud(0, n=96)
    cloud_path = tmp_path / "segment.xyz"
    sf.save_cloud(cloud_path, cloud)
    config_path = tmp_path / "config.json"
    config_path.write_text(
        json.dumps({"k": 2, "total_budget": 32, "iterations": 8, "seed": 0})
    )
    return cloud_path, config_path


class TestFit:
    def test_artifacts_and_schemas(self, tmp_path, segment_files):
        cloud_path, config_path = segment_files
        out = tmp_path / "run"
        code = main(
            ["fit", "--input", str(cloud_path), "--config", str(config_path), "--out", str(out)]
        )
        assert code == 0
        for name in (
            "skeleton.json",
            "report.json",
            "loss_curve.svg",
            "reconstruction.xyz",
            "manifest.json",
            "anchors.xyz",
        ):
            assert (out / name).exists(), name
        skeleton_doc = json.loads((out / "skeleton.json").read_text())
        validate(skeleton_doc, "skeleton.schema.json")
        sf.skeleton_from_json(skeleton_doc)  # round-trips through the loader
        report = json.loads((out / "report.json").read_text())
        validate(report, "report.schema.json")
        manifest = json.loads((out / "manifest.json").read_text())
        validate(manifest, "manifest.schema.json")
        assert manifest["status"] == "ok"
        assert set(manifest["input_digests"]) == {str(cloud_path), str(config_path)}
        # reconstruction carries a source-edge column
        first = (out / "reconstruction.xyz").read_text().splitlines()[0].split()
        assert len(first) == 4

    def test_deterministic_report(self, tmp_path, segment_files):
        cloud_path, config_path = segment_files
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            assert (
                main(
                    [
                        "fit",
                        "--input",
                        str(cloud_path),
                        "--config",
                        str(config_path),
                        "--out",
                        str(out),
                    ]
                )
                == 0
            )
            outs.append((out / "report.json").read_bytes())
        assert outs[0] == outs[1]

    def test_missing_config_exits_2(self, tmp_path, segment_files, capsys):
        cloud_path, _ = segment_files
        missing = tmp_path / "nope.json"
        code = main(
            ["fit", "--input", str(cloud_path), "--config", str(missing), "--out", str(tmp_path / "o")]
        )
        assert code == 2
        err = json.loads(capsys.readouterr().err)
        validate(err, "error.schema.json")
        assert str(missing) in err["error"]["message"]

    def test_missing_input_exits_4(self, tmp_path, segment_files, capsys):
        _, config_path = segment_files
        code = main(
            [
                "fit",
                "--input",
                str(tmp_path / "ghost.xyz"),
                "--config",
                str(config_path),
                "--out",
                str(tmp_path / "o"),
            ]
        )
        assert code == 4
        validate(json.loads(capsys.readouterr().err), "error.schema.json")

    def test_deterministic_across_processes(self, tmp_path, segment_files):
        import subprocess
        import sys

        cloud_path, config_path = segment_files
        blobs = []
        for name in ("p1", "p2"):
            out = tmp_path / name
            proc = subprocess.run(
                [
                    sys.executable,
                    "-m",
                    "skelfit.cli",
                    "fit",
                    "--input",
                    str(cloud_path),
                    "--config",
                    str(config_path),
                    "--out",
                    str(out),
                ],
                capture_output=True,
            )
            assert proc.returncode == 0, proc.stderr
            blobs.append((out / "report.json").read_bytes())
        assert blobs[0] == blobs[1]

    def test_divergence_exits_3(self, tmp_path, segment_files, capsys):
        cloud_path, _ = segment_files
        config_path = tmp_path / "diverge.json"
        config_path.write_text(
            json.dumps(
                {"k": 2, "total_budget": 16, "iterations": 10, "seed": 0, "base_lr": 1e160}
            )
        )
        with np.errstate(all="ignore"):
            code = main(
                [
                    "fit",
                    "--input",
                    str(cloud_path),
                    "--config",
                    str(config_path),
                    "--out",
                    str(tmp_path / "d"),
                ]
            )
        assert code == 3
        err = json.loads(capsys.readouterr().err)
        assert err["error"]["kind"] == "divergence"
        manifest = json.loads((tmp_path / "d" / "manifest.json").read_text())
        assert manifest["status"] == "error"

    def test_shared_anchor_flag(self, tmp_path, segment_files):
        cloud_path, config_path = segment_files
        cloud = sf.load_cloud(cloud_path)
        anchors_path = tmp_path / "anchors.xyz"
        sf.save_cloud(anchors_path, sf.PointCloud(cloud.points[[0, -1]]))
        out = tmp_path / "anchored"
        assert (
            main(
                [
                    "fit",
                    "--input",
                    str(cloud_path),
                    "--config",
                    str(config_path),
                    "--out",
                    str(out),
                    "--anchors",
                    str(anchors_path),
                ]
            )
            == 0
        )
        manifest = json.loads((out / "manifest.json").read_text())
        assert str(anchors_path) in manifest["input_digests"]

    def test_trace_dump(self, tmp_path, segment_files):
        cloud_path, config_path = segment_files
        out = tmp_path / "traced"
        assert (
            main(
                [
                    "fit",
                    "--input",
                    str(cloud_path),
                    "--config",
                    str(config_path),
                    "--out",
                    str(out),
                    "--trace",
                ]
            )
            == 0
        )
        trace = json.loads((out / "trace.json").read_text())
        assert len(trace["selections"]) == 96


class TestPerturb:
    def test_noise(self, tmp_path, segment_files):
        cloud_path, _ = segment_files
        out = tmp_path / "noisy.xyz"
        assert (
            main(
                [
                    "perturb",
                    "--input",
                    str(cloud_path),
                    "--mode",
                    "noise",
                    "--magnitude",
                    "0.05",
                    "--seed",
                    "3",
                    "--out",
                    str(out),
                ]
            )
            == 0
        )
        noisy = sf.load_cloud(out)
        clean = sf.load_cloud(cloud_path)
        assert len(noisy) == len(clean)
        expected = sf.add_gaussian_noise(clean, 0.05, seed=3)
        assert np.array_equal(noisy.points, expected.points)
        manifest = json.loads((out.parent / "manifest.json").read_text())
        assert manifest["mode"] == "noise"
        assert manifest["magnitude"] == 0.05

    def test_subsample_eighth(self, tmp_path):
        cloud = sf.PointCloud(philox(1).uniform(-1, 1, size=(2048, 3)))
        src = tmp_path / "big.xyz"
        sf.save_cloud(src, cloud)
        out = tmp_path / "small.xyz"
        assert (
            main(
                [
                    "perturb",
                    "--input",
                    str(src),
                    "--mode",
                    "subsample",
                    "--magnitude",
                    "0.125",
                    "--out",
                    str(out),
                ]
            )
            == 0
        )
        assert len(sf.load_cloud(out)) == 256

    def test_negative_noise_exits_2(self, tmp_path, segment_files, capsys):
        cloud_path, _ = segment_files
        code = main(
            [
                "perturb",
                "--input",
                str(cloud_path),
                "--mode",
                "noise",
                "--magnitude",
                "-1",
                "--out",
                str(tmp_path / "x.xyz"),
            ]
        )
        assert code == 2
        validate(json.loads(capsys.readouterr().err), "error.schema.json")


def _write_instance(tmp_path, name, points, labels=None):
    pred = tmp_path / f"{name}_pred.xyz"
    anno = tmp_path / f"{name}_anno.json"
    sf.save_cloud(pred, sf.PointCloud(points))
    sf.save_annotations(
        anno, sf.AnnotationSet(points, labels if labels is not None else list(range(len(points))))
    )
    return pred, anno


class TestEval:
    def test_miou_perfect(self, tmp_path):
        pts = philox(2).uniform(-1, 1, size=(5, 3))
        pred, anno = _write_instance(tmp_path, "i0", pts)
        out = tmp_path / "miou.json"
        assert (
            main(["eval", "--metric", "miou", "--out", str(out), str(pred), str(anno)]) == 0
        )
        report = json.loads(out.read_text())
        validate(report, "metric_report.schema.json")
        assert report["aggregate"] == 1.0

    def test_miou_pooled_mode(self, tmp_path):
        rng = philox(8)
        paths = []
        for i in range(2):
            pts = rng.uniform(-1, 1, size=(4, 3))
            pred, anno = _write_instance(tmp_path, f"p{i}", pts)
            paths += [str(pred), str(anno)]
        config = tmp_path / "pool.json"
        config.write_text(json.dumps({"aggregate": "pooled"}))
        out = tmp_path / "pooled.json"
        assert (
            main(["eval", "--metric", "miou", "--config", str(config), "--out", str(out)] + paths)
            == 0
        )
        report = json.loads(out.read_text())
        validate(report, "metric_report.schema.json")
        assert report["pooled"] == 1.0
        assert report["aggregate"] == 1.0

    def test_bad_thread_env_exits_2(self, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv("SKELFIT_THREADS", "many")
        pts = philox(7).uniform(-1, 1, size=(4, 3))
        paths = []
        for i in range(2):
            pred, anno = _write_instance(tmp_path, f"t{i}", pts)
            paths += [str(pred), str(anno)]
        code = main(["eval", "--metric", "miou", "--out", str(tmp_path / "r.json")] + paths)
        assert code == 2
        validate(json.loads(capsys.readouterr().err), "error.schema.json")

    def test_miou_arity_error(self, tmp_path, capsys):
        pts = philox(3).uniform(-1, 1, size=(4, 3))
        pred, _ = _write_instance(tmp_path, "i1", pts)
        code = main(["eval", "--metric", "miou", "--out", str(tmp_path / "r.json"), str(pred)])
        assert code == 2
        validate(json.loads(capsys.readouterr().err), "error.schema.json")

    def test_repeatability_self(self, tmp_path):
        cloud, _ = segment_cloud(12, n=64)
        cloud_path = tmp_path / "c.xyz"
        sf.save_cloud(cloud_path, cloud)
        kp = tmp_path / "kp.xyz"
        sf.save_cloud(kp, sf.PointCloud(cloud.points[:4]))
        out = tmp_path / "rep.json"
        assert (
            main(
                [
                    "eval",
                    "--metric",
                    "repeatability",
                    "--out",
                    str(out),
                    str(kp),
                    str(kp),
                    str(cloud_path),
                ]
            )
            == 0
        )
        assert json.loads(out.read_text())["aggregate"] == 1.0

    def test_das_swap_fixture(self, tmp_path):
        square = np.array([[0.0, 0, 0], [1.0, 0, 0], [1.0, 1, 0], [0.0, 1, 0]])
        swapped = square.copy()
        swapped[[1, 2]] = swapped[[2, 1]]
        ref_pred, ref_anno = _write_instance(tmp_path, "ref", square)
        ev_pred = tmp_path / "ev_pred.xyz"
        sf.save_cloud(ev_pred, sf.PointCloud(swapped))
        ev_anno = tmp_path / "ev_anno.json"
        sf.save_annotations(ev_anno, sf.AnnotationSet(square, [0, 1, 2, 3]))
        out = tmp_path / "das.json"
        assert (
            main(
                [
                    "eval",
                    "--metric",
                    "das",
                    "--out",
                    str(out),
                    str(ref_pred),
                    str(ref_anno),
                    str(ev_pred),
                    str(ev_anno),
                ]
            )
            == 0
        )
        report = json.loads(out.read_text())
        # matches the in-process metric on the shared fixture
        expected = (
            sf.das(square, sf.AnnotationSet(square, [0, 1, 2, 3]), swapped, sf.AnnotationSet(square, [0, 1, 2, 3]))
            + sf.das(swapped, sf.AnnotationSet(square, [0, 1, 2, 3]), square, sf.AnnotationSet(square, [0, 1, 2, 3]))
        ) / 2.0
        assert report["per_instance"][0] == pytest.approx(expected)


class TestEvalAggregation:
    def test_das_first_instance_is_reference(self, tmp_path):
        rng = philox(9)
        base = rng.uniform(-1, 1, size=(5, 3))
        paths = []
        for i in range(3):
            pts = base + rng.normal(0, 0.01, size=base.shape)
            pred, anno = _write_instance(tmp_path, f"d{i}", pts)
            paths += [str(pred), str(anno)]
        out = tmp_path / "das3.json"
        assert main(["eval", "--metric", "das", "--out", str(out)] + paths) == 0
        report = json.loads(out.read_text())
        assert len(report["per_instance"]) == 2  # one score per non-reference
        assert report["aggregate"] == pytest.approx(
            float(np.mean(report["per_instance"]))
        )


class TestAnalyze:
    def test_histogram_outputs(self, tmp_path, segment_files):
        cloud_path, config_path = segment_files
        fit_out = tmp_path / "fitted"
        assert (
            main(
                ["fit", "--input", str(cloud_path), "--config", str(config_path), "--out", str(fit_out)]
            )
            == 0
        )
        out = tmp_path / "analysis"
        assert (
            main(
                [
                    "analyze",
                    "--input",
                    str(cloud_path),
                    "--skeleton",
                    str(fit_out / "skeleton.json"),
                    "--bbox-samples",
                    "3200",
                    "--out",
                    str(out),
                ]
            )
            == 0
        )
        doc = json.loads((out / "histogram.json").read_text())
        validate(doc, "histogram.schema.json")
        for series in doc["series"].values():
            assert sum(series) == 96  # conservation per target
        svg = ET.parse(out / "histogram.svg").getroot()
        polylines = [el for el in svg.iter() if el.tag.endswith("polyline")]
        assert len(polylines) == 3

    def test_malformed_skeleton_exits_4(self, tmp_path, segment_files, capsys):
        cloud_path, _ = segment_files
        bad = tmp_path / "broken.json"
        bad.write_text("{not json")
        code = main(
            [
                "analyze",
                "--input",
                str(cloud_path),
                "--skeleton",
                str(bad),
                "--out",
                str(tmp_path / "a"),
            ]
        )
        assert code == 4
        validate(json.loads(capsys.readouterr().err), "error.schema.json")

    def test_normalization_mismatch_warning(self, tmp_path, segment_files):
        cloud_path, config_path = segment_files
        fit_out = tmp_path / "fitted"
        main(["fit", "--input", str(cloud_path), "--config", str(config_path), "--out", str(fit_out)])
        # scale the cloud far away from the skeleton's frame
        big = tmp_path / "big.xyz"
        cloud = sf.load_cloud(cloud_path)
        sf.save_cloud(big, sf.PointCloud(cloud.points * 100.0))
        out = tmp_path / "warned"
        assert (
            main(
                [
                    "analyze",
                    "--input",
                    str(big),
                    "--skeleton",
                    str(fit_out / "skeleton.json"),
                    "--out",
                    str(out),
                ]
            )
            == 0
        )
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["warnings"]


class TestSvg:
    def test_loss_curve_structure(self, tmp_path, segment_files):
        cloud_path, config_path = segment_files
        out = tmp_path / "run"
        main(["fit", "--input", str(cloud_path), "--config", str(config_path), "--out", str(out)])
        svg = ET.parse(out / "loss_curve.svg").getroot()
        polylines = [el for el in svg.iter() if el.tag.endswith("polyline")]
        names = {el.get("data-series") for el in polylines}
        assert names == {"total", "fidelity", "coverage", "penalty"}
