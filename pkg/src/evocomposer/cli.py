"""Command line: ``generate``, ``edit`` and ``eval``.

Exit codes: 0 success, 2 usage, 3 invalid composition, 4 language model
failure, 5 file error, 6 configuration problem (bad config file, missing
credentials).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import re
import sys
from pathlib import Path
from typing import Any, Sequence

from . import llm_bridge
from .config import ConfigError, load_settings
from .evaluation import SCENARIOS, ConfigurationError, run_scenario
from .pipeline import RenderResult, Settings, render_composition
from .schema import Composition, SchemaError, parse_composition, serialize_composition

log = logging.getLogger("evocomposer")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_SCHEMA = 3
EXIT_LLM = 4
EXIT_IO = 5
EXIT_CONFIG = 6


class UsageError(Exception):
    pass


def _read_text(path: str) -> str:
    return Path(path).read_text(encoding="utf-8")


def _settings(args: argparse.Namespace) -> Settings:
    return load_settings(args.config) if args.config else Settings()


def _transport(args: argparse.Namespace):
    """Canned replies when ``--llm-replay`` is given, HTTPS otherwise."""
    if args.llm_replay:
        text = _read_text(args.llm_replay)
        try:
            doc = json.loads(text)
        except ValueError:
            doc = None
        if isinstance(doc, list):
            replies = [r if isinstance(r, str) else json.dumps(r) for r in doc]
        else:
            replies = [text]
        return llm_bridge.replay_transport(replies * 1000), "replay"
    return llm_bridge.https_transport(), None


def _safe_name(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", name).strip("_") or "song"


def _outputs(out: str | None, comp: Composition) -> tuple[Path, Path]:
    midi = Path(out) if out else Path(_safe_name(comp.name) + ".mid")
    stem = midi.with_suffix("")
    return midi, stem


def _write_artifacts(
    midi_path: Path,
    stem: Path,
    result: RenderResult,
    seed: int,
    settings: Settings,
    comp: Composition,
    session: llm_bridge.ChatSession | None,
    cache: dict[str, Any],
) -> None:
    midi_path.parent.mkdir(parents=True, exist_ok=True)
    midi_path.write_bytes(result.midi)
    report = result.report(seed, settings)
    report["midi"] = str(midi_path)
    Path(f"{stem}.report.json").write_text(json.dumps(report, indent=2), encoding="utf-8")
    with open(f"{stem}.fitness.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["section", "occurrence", "repeat", "track", "role", "mode", "generation", "best_fitness"])
        for r in result.reports:
            for g, f in enumerate(r.fitness_history):
                w.writerow([r.section_id, r.occurrence, r.repeat, r.track_index, r.role, r.mode, g, repr(f)])
    state = {
        "seed": seed,
        "composition": json.loads(serialize_composition(comp)),
        "chat": session.to_dict() if session is not None else None,
        "midi": str(midi_path),
        "cache": cache,
    }
    Path(f"{stem}.session.json").write_text(json.dumps(state), encoding="utf-8")


def cmd_generate(args: argparse.Namespace) -> int:
    settings = _settings(args)
    session = None
    if args.spec:
        comp = parse_composition(_read_text(args.spec))
    else:
        transport, key = _transport(args)
        session = llm_bridge.ChatSession(model_id=args.model)
        text = llm_bridge.request_structure(session, args.prompt, transport, key)
        comp = parse_composition(text)
    cache: dict[str, Any] = {}
    result = render_composition(comp, args.seed, settings, cache)
    midi_path, stem = _outputs(args.output, comp)
    _write_artifacts(midi_path, stem, result, args.seed, settings, comp, session, cache)
    print(midi_path)
    return EXIT_OK


def cmd_edit(args: argparse.Namespace) -> int:
    if not args.session or not Path(args.session).is_file():
        raise UsageError("edit needs an existing --session file written by generate")
    state = json.loads(_read_text(args.session))
    settings = _settings(args)
    seed = args.seed if args.seed is not None else int(state["seed"])
    old = parse_composition(json.dumps(state["composition"]))
    chat = llm_bridge.ChatSession.from_dict(state["chat"]) if state.get("chat") else None
    if args.spec:
        comp = parse_composition(_read_text(args.spec))
    elif args.prompt:
        transport, key = _transport(args)
        if chat is None:
            chat = llm_bridge.ChatSession(model_id=args.model)
            chat.turns.append(("Here is the current song.", serialize_composition(old, indent=None)))
        comp = parse_composition(llm_bridge.request_structure(chat, args.prompt, transport, key))
    else:
        raise UsageError("edit needs --prompt or --spec")
    cache = dict(state.get("cache", {}))
    result = render_composition(comp, seed, settings, cache)
    # drop entries the new arrangement no longer uses
    cache = {fp: cache[fp] for fp in result.fingerprints}
    out = args.output or state.get("midi")
    midi_path, stem = _outputs(out, comp)
    _write_artifacts(midi_path, stem, result, seed, settings, comp, chat, cache)
    print(midi_path)
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    if args.scenario not in SCENARIOS:
        raise UsageError(f"unknown scenario {args.scenario!r}; expected one of {', '.join(SCENARIOS)}")
    settings = _settings(args)
    request = None
    if args.scenario == "prompt_driven":
        transport, key = _transport(args)
        key = key or os.environ.get(llm_bridge.API_KEY_ENV)
        if not key:
            raise llm_bridge.CredentialsMissing(f"set {llm_bridge.API_KEY_ENV} to use a language model")

        def request(prompt: str) -> str:
            return llm_bridge.request_structure(llm_bridge.ChatSession(model_id=args.model), prompt, transport, key)

    report = run_scenario(args.scenario, args.n, args.seed, settings, request, workers=args.workers)
    doc = report.as_dict()
    text = json.dumps(doc, indent=2)
    if args.output:
        out = Path(args.output)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text, encoding="utf-8")
        with open(out.with_suffix(".csv"), "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["metric", "mean", "ci95", "n"])
            for m, s in report.summary.items():
                w.writerow([m, s["mean"], s["ci95"], s["n"]])
    print(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="evocomposer", description="Emotion-conditioned multi-track MIDI composer.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp: argparse.ArgumentParser) -> None:
        sp.add_argument("--config", help="TOML or JSON settings file")
        sp.add_argument("--model", default=llm_bridge.DEFAULT_MODEL, help="chat model id")
        sp.add_argument("--llm-replay", metavar="FILE",
                        help="answer model requests from FILE (a JSON reply or a list of replies)")
        sp.add_argument("-o", "--output")

    g = sub.add_parser("generate", help="compose a song from a prompt or a composition file")
    src = g.add_mutually_exclusive_group(required=True)
    src.add_argument("--prompt")
    src.add_argument("--spec", help="composition JSON file")
    g.add_argument("--seed", type=int, default=0)
    common(g)
    g.set_defaults(func=cmd_generate)

    e = sub.add_parser("edit", help="revise a generated song, regenerating only changed sections")
    e.add_argument("--session", help="session file written by generate")
    e.add_argument("--prompt")
    e.add_argument("--spec", help="revised composition JSON instead of a prompt")
    e.add_argument("--seed", type=int, default=None)
    common(e)
    e.set_defaults(func=cmd_edit)

    v = sub.add_parser("eval", help="objective metrics for a benchmark scenario")
    v.add_argument("--scenario", required=True)
    v.add_argument("--n", type=int, default=20)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--workers", type=int, default=1)
    common(v)
    v.set_defaults(func=cmd_eval)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SchemaError as exc:
        print(f"invalid composition:\n{exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except (llm_bridge.CredentialsMissing, ConfigError, ConfigurationError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except llm_bridge.LLMError as exc:
        print(f"language model error: {exc}", file=sys.stderr)
        return EXIT_LLM
    except OSError as exc:
        print(f"file error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
