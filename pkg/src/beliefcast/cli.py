"""Command-line pipeline: synth, personas, build-graph, embed, train, eval,
zeroshot, stats. One flat config file plus ``--section.key=value`` overrides;
every run is reproducible from (inputs, seed).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .data import load_dataset_dir
from .embed import (
    FileProvider,
    HashProvider,
    build_table,
    read_embeddings,
    write_embeddings,
)
from .graph import (
    Ablation,
    apply_ablation,
    build_graph,
    distant_shared_belief_ratio,
    graph_stats,
    read_graph_json,
    write_graph_json,
)
from .hgt import HgtConfig, compile_graph, load_checkpoint, save_checkpoint
from .llm import MockLlmClient, RemoteChatClient, RemoteConfig
from .metrics import evaluate, write_report
from .persona import extract_latent_persona, read_personas, write_personas
from .synth import SynthConfig, generate_world, world_statistics, write_world
from .train import TrainConfig, predict, table_to_arrays, train, write_history_csv
from .zeroshot import run_zero_shot_eval, write_predictions


class CliError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # one-line machine-parseable errors, no usage dump
        raise CliError(message)


# ---------------------------------------------------------------------------
# Flat config: ``section.key = value`` lines; CLI ``--section.key=value``
# tokens override file values. Unknown keys are rejected.

_SECTION_FIELDS = {
    "synth": {f.name for f in dataclasses.fields(SynthConfig)},
    "hgt": {f.name for f in dataclasses.fields(HgtConfig)},
    "train": {f.name for f in dataclasses.fields(TrainConfig)} - {"betas"} | {"beta1", "beta2"},
    "ablation": {f.name for f in dataclasses.fields(Ablation)},
    "client": {f.name for f in dataclasses.fields(RemoteConfig)},
    "embed": {"dim", "seed"},
    "zeroshot": {"k", "mode", "history_cap"},
}


def _parse_value(raw: str):
    raw = raw.strip()
    if len(raw) >= 2 and raw[0] == raw[-1] and raw[0] in "'\"":
        return raw[1:-1]
    lowered = raw.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        pass
    return raw


def _check_key(key: str) -> tuple[str, str]:
    if key == "seed":  # the one bare top-level key
        return "", "seed"
    section, _, name = key.partition(".")
    if section not in _SECTION_FIELDS or not name:
        raise CliError(f"unknown config key {key!r}")
    if name not in _SECTION_FIELDS[section]:
        raise CliError(f"unknown config key {key!r}")
    return section, name


def parse_config_file(path) -> dict[str, object]:
    values: dict[str, object] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise CliError(f"{path} line {lineno}: expected key = value")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        _check_key(key)
        values[key] = _parse_value(raw)
    return values


def _split_overrides(argv: list[str]) -> tuple[list[str], dict[str, object]]:
    """Pull ``--section.key=value`` tokens out of argv."""
    rest: list[str] = []
    overrides: dict[str, object] = {}
    for token in argv:
        if token.startswith("--") and "." in token.split("=", 1)[0]:
            body = token[2:]
            if "=" not in body:
                raise CliError(f"override {token!r} needs =value")
            key, _, raw = body.partition("=")
            _check_key(key)
            overrides[key] = _parse_value(raw)
        else:
            rest.append(token)
    return rest, overrides


class RunConfig:
    """Merged file values and CLI overrides, consumed section by section."""

    def __init__(self, file_path: str | None, overrides: dict[str, object]):
        self.values: dict[str, object] = {}
        if file_path:
            self.values.update(parse_config_file(file_path))
        self.values.update(overrides)

    def section(self, name: str) -> dict[str, object]:
        out = {}
        for key, value in self.values.items():
            sec, _, field = key.partition(".")
            if sec == name:
                out[field] = value
        return out

    def synth_config(self) -> SynthConfig:
        return SynthConfig(**self.section("synth"))

    def hgt_config(self) -> HgtConfig:
        return HgtConfig(**self.section("hgt"))

    def train_config(self) -> TrainConfig:
        fields = self.section("train")
        beta1 = fields.pop("beta1", None)
        beta2 = fields.pop("beta2", None)
        if beta1 is not None or beta2 is not None:
            fields["betas"] = (
                beta1 if beta1 is not None else 0.9,
                beta2 if beta2 is not None else 0.999,
            )
        return TrainConfig(**fields)

    def ablation(self) -> Ablation:
        return apply_ablation(self.section("ablation") or None)

    def remote_config(self) -> RemoteConfig | None:
        fields = self.section("client")
        if "base_url" not in fields or "model" not in fields:
            return None
        return RemoteConfig(**fields)


def _client(args, config: RunConfig):
    if args.mock:
        return MockLlmClient(seed=args.seed)
    remote = config.remote_config()
    if remote is None:
        raise CliError(
            "no LLM endpoint configured; pass --mock or set client.base_url and client.model"
        )
    return RemoteChatClient(remote)


# ---------------------------------------------------------------------------
# Subcommands


def _cmd_synth(args, config: RunConfig) -> int:
    synth_config = config.synth_config()
    if args.seed is not None:
        synth_config = dataclasses.replace(synth_config, seed=args.seed)
    dataset, personas = generate_world(synth_config)
    write_world(dataset, personas, args.out)
    summary = world_statistics(dataset, personas)
    print(
        json.dumps(
            {
                "n_users": summary.n_users,
                "n_news": summary.n_news,
                "n_responses": summary.n_responses,
                "n_lurkers": summary.n_lurkers,
                "splits": summary.split_sizes,
                "labels": summary.label_distribution,
                "distant_shared_belief_ratio": round(summary.distant_shared_belief_ratio, 4),
            }
        )
    )
    return 0


def _cmd_personas(args, config: RunConfig) -> int:
    dataset = load_dataset_dir(args.data)
    client = _client(args, config)
    personas = [
        extract_latent_persona(client, user, history_cap=args.history_cap)
        for user in dataset.users.values()
    ]
    write_personas(personas, args.out)
    print(json.dumps({"personas": len(personas), "out": str(args.out)}))
    return 0


def _cmd_build_graph(args, config: RunConfig) -> int:
    dataset = load_dataset_dir(args.data)
    personas = read_personas(args.personas) if args.personas else []
    graph = build_graph(dataset, personas, options=config.ablation())
    write_graph_json(graph, args.out)
    stats = graph_stats(graph)
    print(json.dumps({"nodes": stats.node_counts, "edges": stats.edge_counts}))
    return 0


def _cmd_embed(args, config: RunConfig) -> int:
    dataset = load_dataset_dir(args.data)
    graph = read_graph_json(args.graph)
    section = config.section("embed")
    dim = int(section.get("dim", 128))
    seed = int(section.get("seed", args.seed if args.seed is not None else 0))
    if args.from_file:
        provider = FileProvider(args.from_file)
    else:
        provider = HashProvider(dim=dim)
    table = build_table(graph, dataset, provider, options=config.ablation(), seed=seed)
    write_embeddings(table, args.out)
    print(json.dumps({"vectors": len(table), "dim": table.dim, "out": str(args.out)}))
    return 0


def _cmd_train(args, config: RunConfig) -> int:
    dataset = load_dataset_dir(args.data)
    graph = read_graph_json(args.graph)
    table = read_embeddings(args.embeddings)
    hgt_config = config.hgt_config()
    train_config = config.train_config()
    if args.seed is not None:
        train_config = dataclasses.replace(train_config, seed=args.seed)
    if table.dim != hgt_config.dim:
        hgt_config = dataclasses.replace(hgt_config, dim=table.dim)
    result = train(graph, table, dataset, hgt_config, train_config)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_checkpoint(result.params, result.hgt_config, result.schema, out_dir / "checkpoint.bin")
    write_history_csv(result.history, out_dir / "history.csv")
    print(
        json.dumps(
            {
                "epochs_run": len(result.history),
                "best_epoch": result.best_epoch,
                "best_score": round(result.best_score, 4),
                "out_dir": str(out_dir),
            }
        )
    )
    return 0


def _cmd_eval(args, config: RunConfig) -> int:
    dataset = load_dataset_dir(args.data)
    graph = read_graph_json(args.graph)
    table = read_embeddings(args.embeddings)
    params, hgt_config, _ = load_checkpoint(args.checkpoint)
    cgraph = compile_graph(graph)
    H0 = table_to_arrays(table, cgraph)
    samples = dataset.samples(args.split)
    pairs = [(s.user_id, s.news_id) for s in samples]
    preds = predict(cgraph, H0, params, hgt_config, pairs)
    gold = [(s.polarity, s.intensity) for s in samples]

    history_lengths = None
    train_user_ids = None
    beliefs_by_user = None
    if args.lurkers:
        history_lengths = {uid: len(u.history) for uid, u in dataset.users.items()}
    if args.unseen:
        train_user_ids = {s.user_id for s in dataset.samples("train")}
    if args.by_belief:
        beliefs_by_user = {}
        for u, b in graph.belief_edges:
            beliefs_by_user.setdefault(u, []).append(b)
    report = evaluate(
        preds,
        gold,
        samples=samples,
        history_lengths=history_lengths,
        lurker_threshold=args.lurker_threshold,
        train_user_ids=train_user_ids,
        beliefs_by_user=beliefs_by_user,
    )
    if args.out:
        write_report(report, args.out)
    print(json.dumps(report.to_dict()))
    return 0


def _cmd_zeroshot(args, config: RunConfig) -> int:
    dataset = load_dataset_dir(args.data)
    graph = read_graph_json(args.graph)
    client = _client(args, config)
    section = config.section("zeroshot")
    mode = args.mode or str(section.get("mode", "baseline"))
    k = args.k if args.k is not None else int(section.get("k", 25))
    history_cap = int(section.get("history_cap", args.history_cap))
    report, records = run_zero_shot_eval(
        graph, dataset, client, mode=mode, k=k, history_cap=history_cap
    )
    write_predictions(records, args.out)
    if args.report:
        write_report(report, args.report)
    print(json.dumps(report.to_dict()))
    return 0


def _cmd_stats(args, config: RunConfig) -> int:
    graph = read_graph_json(args.graph)
    stats = graph_stats(graph)
    print(
        json.dumps(
            {
                "nodes": stats.node_counts,
                "edges": stats.edge_counts,
                "total_edges": stats.total_edges,
                "belief_histogram": stats.belief_histogram,
                "distant_shared_belief_ratio": round(distant_shared_belief_ratio(graph), 6),
            }
        )
    )
    return 0


# ---------------------------------------------------------------------------


def _build_parser() -> _Parser:
    parser = _Parser(prog="beliefcast", allow_abbrev=False)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")

    p = sub.add_parser("synth", help="generate a planted-belief synthetic world")
    common(p)
    p.add_argument("--out", required=True, help="output directory for the world files")

    p = sub.add_parser("personas", help="extract latent personas for every user")
    common(p)
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--out", required=True, help="personas.jsonl path")
    p.add_argument("--mock", action="store_true", help="use the deterministic mock client")
    p.add_argument("--history-cap", type=int, default=50, help="max posts per prompt")

    p = sub.add_parser("build-graph", help="assemble the belief-augmented graph")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--personas", help="personas.jsonl providing belief edges")
    p.add_argument("--out", required=True, help="graph.json path")

    p = sub.add_parser("embed", help="initialize node embeddings")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--graph", required=True)
    p.add_argument("--out", required=True, help="embeddings.bin path")
    p.add_argument("--from-file", help="import vectors from an existing embeddings file")

    p = sub.add_parser("train", help="train the propagation model")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--graph", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--out-dir", required=True, help="directory for checkpoint.bin and history.csv")

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--graph", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", default="test", choices=["train", "dev", "test"])
    p.add_argument("--lurkers", action="store_true", help="add the lurker-subset breakdown")
    p.add_argument("--unseen", action="store_true", help="add the unseen-user breakdown")
    p.add_argument("--by-belief", action="store_true", help="add per-belief segments")
    p.add_argument("--lurker-threshold", type=int, default=50)
    p.add_argument("--out", help="write report.json here")

    p = sub.add_parser("zeroshot", help="zero-shot forecasting with social prompts")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--graph", required=True)
    p.add_argument("--mode", choices=["baseline", "latent", "social"], default=None)
    p.add_argument("--k", type=int, default=None, help="neighborhood size for social prompts")
    p.add_argument("--out", required=True, help="predictions jsonl path")
    p.add_argument("--report", help="also write report.json here")
    p.add_argument("--mock", action="store_true", help="use the deterministic mock client")
    p.add_argument("--history-cap", type=int, default=50)

    p = sub.add_parser("stats", help="graph statistics and the distant-shared-belief ratio")
    common(p)
    p.add_argument("--graph", required=True)
    return parser


_COMMANDS = {
    "synth": _cmd_synth,
    "personas": _cmd_personas,
    "build-graph": _cmd_build_graph,
    "embed": _cmd_embed,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "zeroshot": _cmd_zeroshot,
    "stats": _cmd_stats,
}


def dispatch(argv: list[str]) -> int:
    try:
        argv, overrides = _split_overrides(list(argv))
        parser = _build_parser()
        args = parser.parse_args(argv)
        config = RunConfig(getattr(args, "config", None), overrides)
        if args.seed is None and "seed" in config.values:
            args.seed = int(config.values["seed"])
        return _COMMANDS[args.command](args, config)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # one-line machine-parseable failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
