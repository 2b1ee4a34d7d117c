import json

import pytest
import yaml
from click.testing import CliRunner

from claimgate.cli import build_all_surfaces, main, resolve_config
from claimgate.backends import StubBackend
from claimgate.errors import ConfigError

from conftest import CORPUS_PATH, GOLDENS, SPLIT_PATH


@pytest.fixture()
def runner():
    return CliRunner()


def test_stats_matches_golden(runner):
    result = runner.invoke(main, ["stats", str(SPLIT_PATH)])
    assert result.exit_code == 0
    assert result.output == (GOLDENS / "stats_mini.txt").read_text("utf-8")


def test_index_writes_artifacts_and_manifest(runner, tmp_path):
    out = tmp_path / "idx"
    result = runner.invoke(main, ["index", str(CORPUS_PATH), "--out", str(out)])
    assert result.exit_code == 0
    for name in ("manifest.json", "passages.jsonl", "postings.json",
                 "doc_lens.json", "run_manifest.json"):
        assert (out / name).exists(), name
    run_manifest = json.loads((out / "run_manifest.json").read_text())
    assert run_manifest["command"] == "index"
    assert len(run_manifest["inputs"]["corpus"]) == 64  # sha256 hex


def test_rewrite_then_cache_reuse(runner, tmp_path):
    cache = tmp_path / "cache"
    out = tmp_path / "surfaces.jsonl"
    args = ["rewrite", str(SPLIT_PATH), "--out", str(out), "--cache-dir", str(cache)]
    assert runner.invoke(main, args).exit_code == 0
    first = out.read_bytes()
    cached_files = list(cache.glob("*.jsonl"))
    assert len(cached_files) == 1
    # second run consumes the cache and reproduces the output byte-exactly
    assert runner.invoke(main, args).exit_code == 0
    assert out.read_bytes() == first


def test_eval_fv_rejects_out_of_range_tau(runner, tmp_path):
    result = runner.invoke(main, [
        "eval-fv", str(SPLIT_PATH), "--out", str(tmp_path / "r"),
        "--surface", "gated-r4", "--tau", "1.01",
    ])
    assert result.exit_code != 0
    assert isinstance(result.exception, ConfigError)


def test_gate_sweep_emits_full_grid(runner, tmp_path):
    out = tmp_path / "sweep"
    result = runner.invoke(main, [
        "gate-sweep", str(SPLIT_PATH), "--candidate", "r4", "--out", str(out)])
    assert result.exit_code == 0
    lines = (out / "sweep.tsv").read_text().strip().splitlines()
    assert len(lines) == 18  # header + 17 grid rows
    assert lines[1].startswith("0.20\t") and lines[-1].startswith("1.00\t")


def test_eval_fv_writes_all_report_forms(runner, tmp_path):
    out = tmp_path / "fv"
    result = runner.invoke(main, [
        "eval-fv", str(SPLIT_PATH), "--out", str(out), "--surface", "gated-r4"])
    assert result.exit_code == 0
    for name in ("report.json", "report.txt", "metrics.tsv", "routing.jsonl",
                 "run_manifest.json"):
        assert (out / name).exists(), name
    report = json.loads((out / "report.json").read_text())
    assert report["config"]["surface"] == "gated-r4"
    assert report["config"]["k_turns"] == 2
    assert report["input_hashes"]["split"]


def test_config_precedence_file_env_flag(tmp_path, monkeypatch):
    cfg_file = tmp_path / "run.yaml"
    cfg_file.write_text(yaml.safe_dump({"tau": 0.30, "k_turns": 4}))
    resolved = resolve_config(cfg_file, {"tau": None, "k_turns": None})
    assert resolved["tau"] == 0.30 and resolved["k_turns"] == 4

    monkeypatch.setenv("CLAIMGATE_TAU", "0.55")
    resolved = resolve_config(cfg_file, {"tau": None})
    assert resolved["tau"] == 0.55  # env beats file

    resolved = resolve_config(cfg_file, {"tau": 0.80})
    assert resolved["tau"] == 0.80  # flag beats env


def test_unknown_config_keys_rejected(tmp_path):
    cfg_file = tmp_path / "run.yaml"
    cfg_file.write_text(yaml.safe_dump({"taus": [0.1]}))
    with pytest.raises(ConfigError, match="unknown config keys"):
        resolve_config(cfg_file, {})


def test_offline_tier_makes_no_network_calls(runner, tmp_path, monkeypatch):
    import requests

    def canary(*args, **kwargs):
        raise AssertionError("network call attempted in offline tier")

    monkeypatch.setattr(requests.Session, "request", canary)
    monkeypatch.setattr(requests, "request", canary)
    result = runner.invoke(main, [
        "eval-fv", str(SPLIT_PATH), "--out", str(tmp_path / "r"),
        "--tier", "offline"], catch_exceptions=False)
    assert result.exit_code == 0


def test_surface_cache_key_tracks_backend(tmp_path, split):
    cache = tmp_path / "cache"
    backend = StubBackend()
    build_all_surfaces(split, backend, split_path=SPLIT_PATH, cache_dir=cache)
    assert len(list(cache.glob("*.jsonl"))) == 1

    other = StubBackend()
    other.descriptor = type(backend.descriptor)(
        capabilities=backend.descriptor.capabilities,
        endpoint="stub-v2", model_ids={})
    build_all_surfaces(split, other, split_path=SPLIT_PATH, cache_dir=cache)
    assert len(list(cache.glob("*.jsonl"))) == 2  # different key, no collision
