"""Command-line entry points.

Configuration precedence (lowest to highest): YAML config file, environment
variables (``CLAIMGATE_*``), command-line flags. Every command that writes
results also writes ``run_manifest.json`` next to them: the fully resolved
configuration plus the sha256 of each input file, enough to reproduce the run
byte-for-byte.
"""

from __future__ import annotations

import hashlib
import json
import os
import sys
from pathlib import Path

import click
import yaml

from . import __version__
from .backends import make_backend
from .data import compute_stats, format_stats, load_split
from .errors import ClaimgateError, ConfigError
from .eval import (
    ProtocolConfig,
    e2e_eval,
    fv_eval,
    human_table,
    ir_eval,
    make_report,
    metrics_tsv,
    resolve_surfaces,
)
from .gate import (
    DEFAULT_TAU_GRID,
    GateConfig,
    GateWeights,
    calibrate_temperature,
    compute_signals,
    gate_sweep,
    sweep_table,
)
from .lexicon import default_lexicon
from .pipeline import PipelineConfig, build_surfaces, ClaimSurfaces
from .retrieval import Bm25Params, CascadeConfig, InvertedIndex, build_index

_ENV_PREFIX = "CLAIMGATE_"
_DEFAULTS = {
    "tier": "offline",
    "endpoint": "http://127.0.0.1:8100",
    "tau": 0.70,
    "temperature": 4.96,
    "surface": "r0",
    "k_turns": 2,
    "concurrency": 1,
    "window": 100,
    "stride": 50,
    "k1": 1.5,
    "b": 0.4,
    "matching_level": "sentence",
    "cache_dir": None,
}
_FLOAT_KEYS = ("tau", "temperature", "k1", "b")
_INT_KEYS = ("k_turns", "concurrency", "window", "stride")


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def resolve_config(config_path, flag_values: dict) -> dict:
    resolved = dict(_DEFAULTS)
    if config_path:
        loaded = yaml.safe_load(Path(config_path).read_text("utf-8")) or {}
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a mapping")
        unknown = set(loaded) - set(_DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        resolved.update(loaded)
    for key in _DEFAULTS:
        env = os.environ.get(_ENV_PREFIX + key.upper())
        if env is not None:
            resolved[key] = env
    for key, value in flag_values.items():
        if value is not None:
            resolved[key] = value
    for key in _FLOAT_KEYS:
        resolved[key] = float(resolved[key])
    for key in _INT_KEYS:
        resolved[key] = int(resolved[key])
    if resolved["tier"] not in ("offline", "live"):
        raise ConfigError(f"unknown tier {resolved['tier']!r}")
    return resolved


def backend_for(cfg: dict):
    """Offline runs are hermetic: the HTTP backend is only reachable from the
    live tier."""
    if cfg["tier"] == "offline":
        return make_backend("stub")
    return make_backend("http", endpoint=cfg["endpoint"])


def gate_config_for(cfg: dict) -> GateConfig:
    return GateConfig(weights=GateWeights(), tau=cfg["tau"], temperature=cfg["temperature"])


def write_manifest(out_dir: Path, command: str, cfg: dict, inputs: dict) -> None:
    manifest = {
        "command": command,
        "version": __version__,
        "config": {k: cfg[k] for k in sorted(cfg)},
        "inputs": {name: sha256_file(p) for name, p in sorted(inputs.items())},
    }
    (out_dir / "run_manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# surface cache

def _surface_cache_key(split_path, backend, pipeline_config: PipelineConfig) -> str:
    payload = "|".join([
        sha256_file(split_path),
        backend.descriptor.cache_key(),
        repr(pipeline_config),
    ])
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def build_all_surfaces(instances, backend, split_path=None, cache_dir=None,
                       pipeline_config: PipelineConfig | None = None) -> dict:
    """instance_id -> ClaimSurfaces, memoized on (split, backend, config)."""
    pipeline_config = pipeline_config or PipelineConfig()
    cache_file = None
    if cache_dir and split_path:
        cache_file = Path(cache_dir) / (
            _surface_cache_key(split_path, backend, pipeline_config) + ".jsonl")
        if cache_file.exists():
            with open(cache_file, encoding="utf-8") as fh:
                return {
                    rec["id"]: ClaimSurfaces.from_record(rec)
                    for rec in map(json.loads, fh)
                }
    surfaces = {
        inst.instance_id: build_surfaces(inst, backend, pipeline_config)
        for inst in instances
    }
    if cache_file is not None:
        cache_file.parent.mkdir(parents=True, exist_ok=True)
        with open(cache_file, "w", encoding="utf-8") as fh:
            for iid in sorted(surfaces):
                fh.write(json.dumps(surfaces[iid].to_record(),
                                    sort_keys=True, ensure_ascii=False) + "\n")
    return surfaces


# ---------------------------------------------------------------------------
# commands

_common = [
    click.option("--config", "config_path", type=click.Path(exists=True), default=None,
                 help="YAML config file (lowest precedence)."),
    click.option("--tier", type=click.Choice(["offline", "live"]), default=None),
    click.option("--endpoint", default=None, help="Sidecar base URL (live tier)."),
    click.option("--concurrency", type=int, default=None,
                 help="Recorded in the manifest; execution is sequential."),
]


def common_options(fn):
    for opt in reversed(_common):
        fn = opt(fn)
    return fn


def _gather(ctx_params, *keys):
    return {k: ctx_params[k] for k in keys if k in ctx_params}


@click.group()
@click.version_option(__version__)
def main():
    """Gated claim rewriting and retrieve-verify evaluation."""


@main.command()
@click.argument("split", type=click.Path(exists=True))
def stats(split):
    """Split composition: counts by subset/label, pronoun prevalence."""
    instances = load_split(split)
    lex = default_lexicon()
    forms = lex.anchor_forms | lex.deictic_forms
    click.echo(format_stats(compute_stats(instances, forms)), nl=False)


@main.command()
@click.argument("corpus", type=click.Path(exists=True))
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--window", type=int, default=None)
@click.option("--stride", type=int, default=None)
@click.option("--k1", type=float, default=None)
@click.option("--b", type=float, default=None)
@common_options
def index(corpus, out_dir, window, stride, k1, b, config_path, tier, endpoint, concurrency):
    """Chunk a corpus into passages and build the BM25 index."""
    cfg = resolve_config(config_path, dict(window=window, stride=stride, k1=k1, b=b,
                                           tier=tier, endpoint=endpoint,
                                           concurrency=concurrency))
    idx = build_index(corpus, window=cfg["window"], stride=cfg["stride"],
                      params=Bm25Params(k1=cfg["k1"], b=cfg["b"]))
    out = Path(out_dir)
    idx.save(out)
    write_manifest(out, "index", cfg, {"corpus": corpus})
    click.echo(json.dumps(idx.manifest(), sort_keys=True, indent=2))


@main.command()
@click.argument("split", type=click.Path(exists=True))
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--cache-dir", default=None)
@common_options
def rewrite(split, out_path, cache_dir, config_path, tier, endpoint, concurrency):
    """Build all claim surfaces (r0..r5) for a split; one JSON line each."""
    cfg = resolve_config(config_path, dict(tier=tier, endpoint=endpoint,
                                           concurrency=concurrency, cache_dir=cache_dir))
    backend = backend_for(cfg)
    instances = load_split(split)
    surfaces = build_all_surfaces(instances, backend, split_path=split,
                                  cache_dir=cfg["cache_dir"])
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(json.dumps(surfaces[inst.instance_id].to_record(),
                                sort_keys=True, ensure_ascii=False) + "\n")
    write_manifest(out.parent, "rewrite", cfg, {"split": split})
    click.echo(f"wrote {len(instances)} surface records to {out}")


@main.command()
@click.argument("split", type=click.Path(exists=True))
@click.option("--k-turns", type=int, default=None)
@common_options
def calibrate(split, k_turns, config_path, tier, endpoint, concurrency):
    """Fit the NLI softmax temperature on gold-evidence verification pairs."""
    cfg = resolve_config(config_path, dict(k_turns=k_turns, tier=tier,
                                           endpoint=endpoint, concurrency=concurrency))
    backend = backend_for(cfg)
    pairs = []
    for inst in load_split(split):
        texts = [e.text for e in inst.evidence if e.text.strip()]
        if not texts:
            continue
        turns = list(inst.context_turns)[-cfg["k_turns"]:] if cfg["k_turns"] else []
        hypothesis = " ".join(turns + [inst.response])
        pairs.append((" ".join(texts), hypothesis, inst.label))
    result = calibrate_temperature(pairs, backend)
    click.echo(json.dumps({
        "temperature": result.temperature,
        "nll_before": result.nll_before,
        "nll_after": result.nll_after,
        "pairs": result.sample_count,
    }, sort_keys=True, indent=2))


def _protocol_config(cfg: dict, protocol: str) -> ProtocolConfig:
    return ProtocolConfig(
        protocol=protocol, surface=cfg["surface"], k_turns=cfg["k_turns"],
        gate=gate_config_for(cfg), matching_level=cfg["matching_level"],
    )


def _emit_report(report, out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(report.to_json(), encoding="utf-8")
    (out_dir / "report.txt").write_text(human_table(report), encoding="utf-8")
    (out_dir / "metrics.tsv").write_text(metrics_tsv(report), encoding="utf-8")
    if report.routing_log:
        (out_dir / "routing.jsonl").write_text(report.routing_log_jsonl(), encoding="utf-8")
    click.echo(human_table(report), nl=False)


def _run_protocol(protocol, split, index_dir, out_dir, cfg):
    backend = backend_for(cfg)
    instances = load_split(split)
    config = _protocol_config(cfg, protocol)
    surfaces = build_all_surfaces(instances, backend, split_path=split,
                                  cache_dir=cfg["cache_dir"])
    routed, outcomes = resolve_surfaces(instances, surfaces, config, backend)
    inputs = {"split": split}
    if protocol == "FV":
        metrics = fv_eval(instances, routed, config, backend)
    else:
        idx = InvertedIndex.load(index_dir)
        inputs["index_manifest"] = str(Path(index_dir) / "manifest.json")
        cascade = CascadeConfig()
        if protocol == "IR":
            metrics = ir_eval(instances, routed, config, idx, cascade, backend)
        else:
            metrics = e2e_eval(instances, routed, config, idx, cascade, backend)
    report = make_report(
        protocol, config, metrics, outcomes=outcomes,
        provenance={"backend": backend.descriptor.cache_key(), "tier": cfg["tier"]},
        input_hashes={name: sha256_file(p) for name, p in inputs.items()},
    )
    out = Path(out_dir)
    _emit_report(report, out)
    write_manifest(out, f"eval-{protocol.lower()}", cfg, inputs)


def _eval_command(name, protocol, needs_index):
    @click.argument("split", type=click.Path(exists=True))
    @click.option("--out", "out_dir", type=click.Path(), required=True)
    @click.option("--surface", type=str, default=None,
                  help="r0..r5 or gated-r4 / gated-r5.")
    @click.option("--tau", type=float, default=None)
    @click.option("--k-turns", type=int, default=None)
    @click.option("--matching-level", type=click.Choice(["sentence", "doc"]), default=None)
    @click.option("--cache-dir", default=None)
    @common_options
    def cmd(split, out_dir, surface, tau, k_turns, matching_level, cache_dir,
            config_path, tier, endpoint, concurrency, **extra):
        cfg = resolve_config(config_path, dict(
            surface=surface, tau=tau, k_turns=k_turns, matching_level=matching_level,
            cache_dir=cache_dir, tier=tier, endpoint=endpoint, concurrency=concurrency))
        _run_protocol(protocol, split, extra.get("index_dir"), out_dir, cfg)

    if needs_index:
        cmd = click.option("--index", "index_dir", type=click.Path(exists=True),
                           required=True)(cmd)
    cmd.__name__ = name
    return main.command(name)(cmd)


eval_fv = _eval_command("eval-fv", "FV", needs_index=False)
eval_ir = _eval_command("eval-ir", "IR", needs_index=True)
eval_e2e = _eval_command("eval-e2e", "E2E", needs_index=True)


@main.command("gate-sweep")
@click.argument("split", type=click.Path(exists=True))
@click.option("--candidate", type=click.Choice(["r4", "r5"]), default="r4")
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--k-turns", type=int, default=None)
@click.option("--cache-dir", default=None)
@common_options
def gate_sweep_cmd(split, candidate, out_dir, k_turns, cache_dir,
                   config_path, tier, endpoint, concurrency):
    """Sweep the acceptance threshold over cached gate signals; one FV-metric
    row per grid point."""
    cfg = resolve_config(config_path, dict(k_turns=k_turns, cache_dir=cache_dir,
                                           tier=tier, endpoint=endpoint,
                                           concurrency=concurrency))
    backend = backend_for(cfg)
    instances = load_split(split)
    surfaces = build_all_surfaces(instances, backend, split_path=split,
                                  cache_dir=cfg["cache_dir"])
    signals = compute_signals(instances, surfaces, candidate,
                              gate_config_for(cfg), backend)
    config = _protocol_config({**cfg, "surface": "r0"}, "FV")

    def hook(routed, tau):
        m = fv_eval(instances, routed, config, backend)
        return {"accuracy": m["accuracy"], "macro_f1": m["macro_f1"]}

    rows = gate_sweep(signals, DEFAULT_TAU_GRID, hook)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    table = sweep_table(rows)
    (out / "sweep.tsv").write_text(table, encoding="utf-8")
    write_manifest(out, "gate-sweep", cfg, {"split": split})
    click.echo(table, nl=False)


def run():
    try:
        main(standalone_mode=False)
    except click.ClickException as exc:
        exc.show()
        sys.exit(exc.exit_code)
    except click.Abort:
        sys.exit(130)
    except ClaimgateError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)


if __name__ == "__main__":
    run()
