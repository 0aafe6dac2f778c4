"""Command-line interface tests, driven through main() in process."""

import json
import subprocess
import sys

import numpy as np
import pytest

from apknn.cli import RunConfig, main
from apknn.datasets import write_binary, write_text
from apknn.fabric import FabricConfig
from apknn.perf import PlatformParams


@pytest.fixture
def workspace(tmp_path):
    rng = np.random.default_rng(1)
    write_binary(tmp_path / "data.apkn",
                 rng.integers(0, 2, size=(60, 16), dtype=np.uint8))
    write_binary(tmp_path / "queries.apkn",
                 rng.integers(0, 2, size=(5, 16), dtype=np.uint8))
    return tmp_path


def run(capsys, argv):
    rc = main([str(a) for a in argv])
    captured = capsys.readouterr()
    return rc, captured.out, captured.err


class TestCompile:
    def test_partitions_at_capacity(self, capsys, tmp_path):
        rng = np.random.default_rng(0)
        write_binary(tmp_path / "big.apkn",
                     rng.integers(0, 2, size=(2048, 256), dtype=np.uint8))
        rc, out, _ = run(capsys, ["compile", tmp_path / "big.apkn",
                                  "--out", tmp_path / "boards"])
        assert rc == 0
        assert "4 partition(s) of capacity 512" in out
        images = sorted(p.name for p in tmp_path.glob("boards/image_*"))
        layouts = sorted(p.name for p in tmp_path.glob("boards/layout_*"))
        assert images == [f"image_{i:04d}.json" for i in range(4)]
        assert layouts == [f"layout_{i:04d}.json" for i in range(4)]
        assert (tmp_path / "boards" / "resources.txt").exists()
        assert (tmp_path / "boards" / "resources.csv").exists()

    def test_recompile_is_byte_identical(self, capsys, workspace):
        for name in ("a", "b"):
            rc, _, _ = run(capsys, ["compile", workspace / "data.apkn",
                                    "--out", workspace / name,
                                    "--capacity", 32])
        names = [p.name for p in (workspace / "a").iterdir()]
        assert len(names) == 2 * 2 + 2
        for name in names:
            assert (workspace / "a" / name).read_bytes() == \
                (workspace / "b" / name).read_bytes()

    def test_empty_dataset_rejected(self, capsys, tmp_path):
        write_binary(tmp_path / "e.apkn", np.zeros((0, 8), dtype=np.uint8))
        rc, _, err = run(capsys, ["compile", tmp_path / "e.apkn",
                                  "--out", tmp_path / "x"])
        assert rc == 1
        assert "no vectors" in err

    def test_malformed_dataset_reports_byte_offset(self, capsys, tmp_path):
        (tmp_path / "bad.apkn").write_bytes(b"APKN\x01\x00" + bytes(8))
        rc, _, err = run(capsys, ["compile", tmp_path / "bad.apkn",
                                  "--out", tmp_path / "x"])
        assert rc == 1
        assert "(byte 14)" in err

    def test_option_conflicts_surface(self, capsys, workspace):
        rc, _, err = run(capsys, ["compile", workspace / "data.apkn",
                                  "--out", workspace / "x",
                                  "--packing", 2, "--counter-increment"])
        assert rc == 1
        assert "error:" in err


class TestQueryAndOracle:
    def test_fig_style_instance_returns_vector_a(self, capsys, tmp_path):
        write_text(tmp_path / "ab.txt",
                   np.array([[1, 0, 1, 1], [0, 0, 0, 0]], dtype=np.uint8))
        write_text(tmp_path / "c.txt",
                   np.array([[1, 0, 0, 1]], dtype=np.uint8))
        rc, _, _ = run(capsys, ["compile", tmp_path / "ab.txt",
                                "--out", tmp_path / "fig"])
        assert rc == 0
        rc, _, _ = run(capsys, ["query", tmp_path / "c.txt",
                                "--images", tmp_path / "fig", "--k", 1,
                                "--out", tmp_path / "res.jsonl"])
        assert rc == 0
        record = json.loads((tmp_path / "res.jsonl").read_text())
        assert record == {"query_id": 0,
                          "neighbors": [{"id": 0, "distance": 1}]}

    def test_query_agrees_with_oracle(self, capsys, workspace):
        rc, _, _ = run(capsys, ["compile", workspace / "data.apkn",
                                "--out", workspace / "b",
                                "--capacity", 25])
        assert rc == 0
        run(capsys, ["query", workspace / "queries.apkn",
                     "--images", workspace / "b", "--k", 4,
                     "--out", workspace / "q.jsonl"])
        run(capsys, ["oracle", workspace / "data.apkn",
                     workspace / "queries.apkn", "--k", 4,
                     "--out", workspace / "o.jsonl"])
        assert (workspace / "q.jsonl").read_text() == \
            (workspace / "o.jsonl").read_text()

    def test_query_to_stdout(self, capsys, workspace):
        run(capsys, ["compile", workspace / "data.apkn",
                     "--out", workspace / "b"])
        rc, out, _ = run(capsys, ["query", workspace / "queries.apkn",
                                  "--images", workspace / "b", "--k", 1])
        assert rc == 0
        assert len(out.strip().split("\n")) == 5

    def test_error_paths(self, capsys, workspace, tmp_path):
        run(capsys, ["compile", workspace / "data.apkn",
                     "--out", workspace / "b"])
        rc, _, err = run(capsys, ["query", workspace / "queries.apkn",
                                  "--images", workspace / "b", "--k", 0])
        assert rc == 1 and "k must be positive" in err
        rc, _, err = run(capsys, ["query", workspace / "queries.apkn",
                                  "--images", tmp_path / "void", "--k", 1])
        assert rc == 1 and "no board images" in err
        write_binary(tmp_path / "q8.apkn", np.zeros((1, 8), dtype=np.uint8))
        rc, _, err = run(capsys, ["query", tmp_path / "q8.apkn",
                                  "--images", workspace / "b", "--k", 1])
        assert rc == 1 and "does not match" in err


class TestVerify:
    def test_plain_and_packed(self, capsys, workspace):
        for extra in ([], ["--packing", 2], ["--counter-increment"]):
            rc, out, _ = run(capsys, ["verify", workspace / "data.apkn",
                                      workspace / "queries.apkn",
                                      "--k", 3, "--capacity", 30] + extra)
            assert rc == 0
            assert "OK: 5 queries against 60 vectors" in out


class TestIndexCli:
    @pytest.mark.parametrize("kind,extra", [
        ("kd", ["--trees", 3]),
        ("kmeans", ["--branching", 3]),
        ("lsh", ["--bits-per-key", 6])])
    def test_build_and_search_modes_agree(self, capsys, workspace, kind,
                                          extra):
        path = workspace / f"{kind}.json"
        rc, out, _ = run(capsys, ["index", "build", workspace / "data.apkn",
                                  "--kind", kind, "--out", path,
                                  "--capacity", 20, "--seed", 5] + extra)
        assert rc == 0
        assert f"built {kind} index" in out
        outputs = []
        for mode in ("oracle", "fabric"):
            rc, out, err = run(capsys, ["index", "search", path,
                                        workspace / "queries.apkn",
                                        "--k", 3, "--mode", mode])
            assert rc == 0
            assert "visited" in err
            outputs.append(out)
        assert outputs[0] == outputs[1]


class TestModel:
    def test_perf_report(self, capsys, tmp_path):
        rc, out, _ = run(capsys, ["model", "perf",
                                  "--csv", tmp_path / "perf.csv"])
        assert rc == 0
        assert "WordEmbed small-dataset run time [ms]" in out
        assert "TagSpace generation-2 run time [s]" in out
        csv = (tmp_path / "perf.csv").read_text()
        assert csv.startswith("quantity,value")
        assert "1.97101" in csv

    def test_bandwidth_report(self, capsys):
        rc, out, _ = run(capsys, ["model", "bandwidth",
                                  "--reduction", 16, 4])
        assert rc == 0
        lines = {" ".join(line.split()) for line in out.splitlines()}
        assert "WordEmbed feasible multiplexed x7 no" in lines
        assert "TagSpace feasible multiplexed x7 yes" in lines
        assert "reduced bandwidth" in out

    def test_resources_synthetic(self, capsys):
        rc, out, _ = run(capsys, ["model", "resources",
                                  "--synthetic", 40, 16, "--packing", 4])
        assert rc == 0
        assert "partition 0 stes" in out
        assert "partition 0 devices" in out

    def test_resources_needs_input(self, capsys):
        rc, _, err = run(capsys, ["model", "resources"])
        assert rc == 1
        assert "--synthetic" in err


class TestReproduceCli:
    @pytest.mark.parametrize("table", ["table1", "table2", "table7",
                                       "table8"])
    def test_passes_with_defaults(self, capsys, tmp_path, table):
        rc, out, _ = run(capsys, ["reproduce", table,
                                  "--csv", tmp_path / "t.csv"])
        assert rc == 0
        assert "PASS" in out
        assert (tmp_path / "t.csv").read_text().startswith("quantity,")

    def test_bad_platform_fails_exit_code(self, capsys, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"platform": {"clock_hz": 266e6}}))
        rc, out, _ = run(capsys, ["reproduce", "table1", "--config", cfg])
        assert rc == 1
        assert "FAIL" in out

    def test_unknown_table_rejected_by_parser(self, capsys):
        with pytest.raises(SystemExit):
            main(["reproduce", "table3"])


class TestRunConfig:
    def test_defaults_match_models(self):
        cfg = RunConfig()
        assert cfg.fabric == FabricConfig()
        assert cfg.platform == PlatformParams()
        assert cfg.capacity.capacity_for(256) == 512
        names = [w.name for w in cfg.resolved_workloads()]
        assert names == ["WordEmbed", "SIFT", "TagSpace"]

    def test_unknown_top_level_key(self):
        with pytest.raises(ValueError, match="unknown config keys"):
            RunConfig.from_document({"platfrm": {}})

    def test_unknown_section_field(self):
        with pytest.raises(ValueError, match="fabric"):
            RunConfig.from_document({"fabric": {"clock": 1}})
        with pytest.raises(ValueError, match="capacity"):
            RunConfig.from_document({"capacity": {"rows": 1}})

    def test_capacity_table_and_workloads(self):
        cfg = RunConfig.from_document({
            "capacity": {"table": {"16": 8}},
            "workloads": [{"name": "Tiny", "d": 16, "k": 2,
                           "capacity": 8, "n": 64, "q": 10}],
            "seed": 3})
        assert cfg.capacity.capacity_for(16) == 8
        assert cfg.resolved_workloads()[0].name == "Tiny"
        assert cfg.seed == 3

    def test_config_drives_compile_capacity(self, capsys, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"capacity": {"table": {"16": 8}}}))
        rng = np.random.default_rng(2)
        write_binary(tmp_path / "t.apkn",
                     rng.integers(0, 2, size=(20, 16), dtype=np.uint8))
        rc, out, _ = run(capsys, ["compile", tmp_path / "t.apkn",
                                  "--out", tmp_path / "tb",
                                  "--config", cfg])
        assert rc == 0
        assert "3 partition(s) of capacity 8" in out


def test_module_entry_point(tmp_path):
    result = subprocess.run(
        [sys.executable, "-m", "apknn.cli", "reproduce", "table1"],
        capture_output=True, text=True)
    assert result.returncode == 0
    assert "PASS" in result.stdout
