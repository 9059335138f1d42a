"""Command-line interface orchestrating the pipeline.

Subcommands: ingest, mix, build-sft, build-dpo, evaluate, stats, review.
Configuration lives in one YAML file; --seed/--out/--backend flags override
it. Exit codes: 0 success, 1 data errors, 2 configuration errors. Pre-flight
validation runs before any output file is created.
"""

from __future__ import annotations

import functools
import json
import logging
import sys
from pathlib import Path
from typing import Optional

import click
import yaml

from .augment import load_candidates, review as apply_review, save_candidates, STATUS_PENDING
from .client import make_client
from .errors import ConfigurationError, DataError
from .ingest import MixturePlan, ReaderSpec, filter_length, filter_na, load_dataset, mix_general, mix_proportional
from .model import TaskKind, read_instances, write_instances
from .pipeline import (
    DpoPlan,
    SftOptions,
    evaluate_files,
    run_build_dpo,
    run_build_sft,
    stats as corpus_stats,
)

logger = logging.getLogger(__name__)

EXIT_DATA_ERROR = 1
EXIT_CONFIG_ERROR = 2


def _guarded(fn):
    """Map domain errors to the documented exit codes."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigurationError as e:
            click.echo(f"configuration error: {e}", err=True)
            sys.exit(EXIT_CONFIG_ERROR)
        except DataError as e:
            click.echo(f"data error: {e}", err=True)
            sys.exit(EXIT_DATA_ERROR)

    return wrapper


def _load_config(path: Optional[str]) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise ConfigurationError(f"config file not found: {path}")
    try:
        data = yaml.safe_load(p.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as e:
        raise ConfigurationError(f"invalid config: {e}")
    if not isinstance(data, dict):
        raise ConfigurationError("config root must be a mapping")
    return data


def _require_files(*paths) -> None:
    for p in paths:
        if p is not None and not Path(p).exists():
            raise ConfigurationError(f"input file not found: {p}")


def _write_json(data: dict, out: Optional[str]) -> None:
    text = json.dumps(data, ensure_ascii=False, sort_keys=True, indent=2)
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text + "\n", encoding="utf-8")
    else:
        click.echo(text)


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Enable debug logging.")
def main(verbose: bool):
    """Build and evaluate information-extraction alignment corpora."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )


@main.command()
@click.option("--config", "config_path", required=True, help="Reader config YAML.")
@click.option("--out", "out_path", required=True, help="Canonical JSONL output path.")
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--lenient", is_flag=True, help="Skip malformed lines instead of failing.")
@_guarded
def ingest(config_path, out_path, seed, lenient):
    """Read a raw dataset into canonical instances, applying NA and length filters."""
    cfg = _load_config(config_path)
    for key in ("dataset", "task", "path"):
        if key not in cfg:
            raise ConfigurationError(f"ingest config missing {key!r}")
    try:
        task = TaskKind(cfg["task"])
    except ValueError:
        raise ConfigurationError(f"unknown task {cfg['task']!r}")
    _require_files(cfg["path"], cfg.get("schema"))
    spec = ReaderSpec(
        dataset=cfg["dataset"],
        task=task,
        text_field=cfg.get("text_field", "text"),
        gold_field=cfg.get("gold_field", "gold"),
        schema_path=cfg.get("schema"),
        null_labels=tuple(cfg.get("null_labels", ())),
    )
    instances = load_dataset(spec, cfg["path"], lenient=lenient)
    n_loaded = len(instances)
    instances = filter_na(
        instances,
        keep_rate=cfg.get("na_keep_rate", 0.2),
        seed=seed if seed is not None else cfg.get("seed", 0),
    )
    n_after_na = len(instances)
    instances = filter_length(instances, max_tokens=cfg.get("max_tokens", 2048))
    Path(out_path).parent.mkdir(parents=True, exist_ok=True)
    write_instances(instances, out_path)
    click.echo(
        f"loaded {n_loaded}, after NA filter {n_after_na}, "
        f"after length filter {len(instances)} -> {out_path}"
    )


@main.command()
@click.option("--config", "config_path", required=True, help="Mixture config YAML.")
@click.option("--out", "out_path", required=True, help="Mixed canonical JSONL output.")
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@_guarded
def mix(config_path, out_path, seed):
    """Combine canonical datasets with the proportional cap, optionally mixing
    in a general-purpose corpus at a fixed IE rate."""
    cfg = _load_config(config_path)
    datasets_cfg = cfg.get("datasets")
    if not datasets_cfg:
        raise ConfigurationError("mix config missing 'datasets'")
    _require_files(*datasets_cfg.values(), cfg.get("general"))
    datasets = {name: read_instances(path) for name, path in datasets_cfg.items()}
    plan = MixturePlan(
        cap=cfg.get("cap", 5000),
        quotas=cfg.get("quotas", {}),
        seed=seed if seed is not None else cfg.get("seed", 0),
    )
    mixed, counts = mix_proportional(datasets, plan)
    if cfg.get("general"):
        general = read_instances(cfg["general"])
        mixed = mix_general(mixed, general, ie_rate=cfg.get("ie_rate", 0.2), seed=plan.seed)
    Path(out_path).parent.mkdir(parents=True, exist_ok=True)
    write_instances(mixed, out_path)
    click.echo(f"contributions {counts}, total {len(mixed)} -> {out_path}")


def _sft_options(cfg: dict, seed: Optional[int]) -> SftOptions:
    opts = cfg.get("options", {})
    allowed = {
        "demo_rate", "demo_k_range", "demo_pool_size", "guideline_rate",
        "symbol_rate", "cot_rate", "cot_per_task", "max_tokens", "pool_dir",
    }
    unknown = set(opts) - allowed
    if unknown:
        raise ConfigurationError(f"unknown SFT options: {sorted(unknown)}")
    if "demo_k_range" in opts:
        opts["demo_k_range"] = tuple(opts["demo_k_range"])
    return SftOptions(seed=seed if seed is not None else cfg.get("seed", 0), **opts)


def _make_backend(cfg: dict, backend_override: Optional[str]):
    backend_cfg = dict(cfg.get("backend", {}))
    if backend_override:
        if backend_override in ("mock", "live"):
            backend_cfg["kind"] = backend_override
        elif backend_override.startswith(("http://", "https://")):
            backend_cfg["kind"] = "live"
            backend_cfg["endpoint"] = backend_override
        else:
            backend_cfg["kind"] = "mock"
            backend_cfg["policy"] = backend_override
    if not backend_cfg:
        return None
    return make_client(backend_cfg, cache_dir=cfg.get("cache_dir"))


@main.command("build-sft")
@click.option("--config", "config_path", required=True, help="Pipeline config YAML.")
@click.option("--out", "out_dir", required=True, help="Output directory.")
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--backend", default=None, help="Override the backend (mock|live|policy|endpoint).")
@_guarded
def build_sft_cmd(config_path, out_dir, seed, backend):
    """Build the instruction-tuning corpus from canonical instances."""
    cfg = _load_config(config_path)
    if "instances" not in cfg:
        raise ConfigurationError("build-sft config missing 'instances'")
    _require_files(cfg["instances"])
    opts = _sft_options(cfg, seed)
    if opts.pool_dir:
        _require_files(opts.pool_dir)
    client = _make_backend(cfg, backend)
    instances = read_instances(cfg["instances"])
    manifest = run_build_sft(instances, opts, out_dir, client=client, config=cfg)
    click.echo(json.dumps(manifest["counts"], sort_keys=True))
    click.echo(f"wrote {out_dir}/sft.jsonl and manifest.json")


@main.command("build-dpo")
@click.option("--config", "config_path", required=True, help="Plan config YAML.")
@click.option("--out", "out_dir", required=True, help="Output directory.")
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--backend", default=None, help="Override the backend (mock|live|policy|endpoint).")
@_guarded
def build_dpo_cmd(config_path, out_dir, seed, backend):
    """Build the preference-pair corpus with a model backend (mock allowed)."""
    cfg = _load_config(config_path)
    if "instances" not in cfg:
        raise ConfigurationError("build-dpo config missing 'instances'")
    _require_files(cfg["instances"])
    plan_cfg = cfg.get("plan", {})
    plan = DpoPlan(
        gap_threshold=plan_cfg.get("gap_threshold", 0.10),
        offline_rate=plan_cfg.get("offline_rate", 0.7),
        target_size=plan_cfg.get("target_size", 10_000),
        sample_temperature=plan_cfg.get("sample_temperature", 1.0),
        samples_per_instance=plan_cfg.get("samples_per_instance", 5),
        seed=seed if seed is not None else cfg.get("seed", 0),
    )
    client = _make_backend(cfg, backend)
    if client is None:
        raise ConfigurationError("build-dpo requires a backend (config 'backend' or --backend)")
    instances = read_instances(cfg["instances"])
    manifest = run_build_dpo(
        instances, plan, client, out_dir, pool_dir=cfg.get("pool_dir"), config=cfg
    )
    click.echo(json.dumps(manifest["counts"], sort_keys=True))
    click.echo(f"wrote {out_dir}/dpo.jsonl and manifest.json")


@main.command()
@click.option("--pred", "pred_path", required=True, help="Predictions JSONL ({id, output}).")
@click.option("--gold", "gold_path", required=True, help="Gold canonical instances JSONL.")
@click.option("--task", default=None, help="Expected task; mismatching golds are an error.")
@click.option("--out", "out_path", default=None, help="Write the report JSON here.")
@_guarded
def evaluate(pred_path, gold_path, task, out_path):
    """Score predictions against gold with exact-match micro F1."""
    _require_files(pred_path, gold_path)
    task_kind = None
    if task is not None:
        try:
            task_kind = TaskKind(task)
        except ValueError:
            raise ConfigurationError(f"unknown task {task!r}")
    report = evaluate_files(pred_path, gold_path, task=task_kind)
    _write_json(report, out_path)


@main.command()
@click.option("--corpus", "corpus_path", required=True, help="SFT corpus JSONL.")
@click.option("--out", "out_path", default=None, help="Write the report JSON here.")
@_guarded
def stats(corpus_path, out_path):
    """Composition report and schema-closure audit over an SFT corpus."""
    _require_files(corpus_path)
    records = []
    skipped = 0
    with open(corpus_path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError:
                skipped += 1
    report = corpus_stats(records)
    report["malformed_lines"] = skipped
    _write_json(report, out_path)


@main.group()
def review():
    """Inspect and decide on generated candidates (descriptions, templates)."""


@review.command("list")
@click.option("--candidates", "cand_path", required=True, help="Candidates JSONL.")
@click.option("--all", "show_all", is_flag=True, help="Include decided candidates.")
@_guarded
def review_list(cand_path, show_all):
    _require_files(cand_path)
    for cand in load_candidates(cand_path):
        if not show_all and cand.status != STATUS_PENDING:
            continue
        click.echo(f"{cand.id}  [{cand.status}]  {cand.kind}/{cand.task}: {cand.text[:100]!r}")


def _decide(cand_path, cand_id, decision, pool_dir, audit_path):
    _require_files(cand_path)
    candidates = load_candidates(cand_path)
    apply_review(candidates, {cand_id: decision}, pool_dir=pool_dir, audit_path=audit_path)
    save_candidates(candidates, cand_path)
    click.echo(f"{decision}ed {cand_id}")


@review.command("accept")
@click.argument("cand_id")
@click.option("--candidates", "cand_path", required=True, help="Candidates JSONL.")
@click.option("--pool-dir", default=None, help="Description pool directory to append to.")
@click.option("--audit", "audit_path", default=None, help="Append-only audit log path.")
@_guarded
def review_accept(cand_id, cand_path, pool_dir, audit_path):
    _decide(cand_path, cand_id, "accept", pool_dir, audit_path)


@review.command("reject")
@click.argument("cand_id")
@click.option("--candidates", "cand_path", required=True, help="Candidates JSONL.")
@click.option("--audit", "audit_path", default=None, help="Append-only audit log path.")
@_guarded
def review_reject(cand_id, cand_path, audit_path):
    _decide(cand_path, cand_id, "reject", None, audit_path)


if __name__ == "__main__":
    main()
