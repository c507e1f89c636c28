"""``specdep`` command line.

Exit status: 0 when nothing is found (or, with ``--defend``, when the chosen
defense is sufficient), 1 when findings remain, 2 on usage or parse errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import __version__
from .builder import (
    READ_KINDS,
    Channel,
    DelayMechanism,
    MicroOpKind,
    ThreatModel,
    UnsupportedProgram,
    build_attack_graph,
)
from .catalog import CatalogError, enumerate_variants, find_templates, load_catalog, preset_threat_model
from .defense import DefenseStrategy, apply_defense, find_vulnerabilities
from .dot import to_dot
from .ir import ParseError, parse_program
from .report import Analysis, render_json, render_text, report_dict

EXIT_CLEAN, EXIT_FINDINGS, EXIT_USAGE = 0, 1, 2

SOURCE_ALIASES = {
    "mem": MicroOpKind.READ_MEMORY,
    "memory": MicroOpKind.READ_MEMORY,
    "cache": MicroOpKind.READ_CACHE,
    "lfb": MicroOpKind.READ_LINE_FILL_BUFFER,
    "fill-buffer": MicroOpKind.READ_LINE_FILL_BUFFER,
    "sb": MicroOpKind.READ_STORE_BUFFER,
    "store-buffer": MicroOpKind.READ_STORE_BUFFER,
    "lp": MicroOpKind.READ_LOAD_PORT,
    "load-port": MicroOpKind.READ_LOAD_PORT,
    "sysreg": MicroOpKind.READ_SPECIAL_REGISTER,
    "fpreg": MicroOpKind.READ_FP_REGISTER,
}


class UsageError(Exception):
    pass


def _pick(token: str, enum_cls, aliases=None):
    if aliases and token in aliases:
        return aliases[token]
    try:
        value = enum_cls(token)
    except ValueError:
        raise UsageError(f"unknown {enum_cls.__name__} {token!r}") from None
    return value


def parse_threat_model(spec: str) -> ThreatModel:
    """``DELAYS,SOURCES[,CHANNELS]`` with ``+`` between alternatives in a group."""
    groups = spec.split(",")
    if len(groups) not in (2, 3):
        raise UsageError(f"--tm expects DELAYS,SOURCES[,CHANNELS], got {spec!r}")
    if len(groups) == 2:
        groups.append(Channel.FLUSH_RELOAD.value)
    delays = {_pick(t, DelayMechanism) for t in groups[0].split("+") if t}
    sources = set()
    for t in groups[1].split("+"):
        if t:
            kind = _pick(t, MicroOpKind, SOURCE_ALIASES)
            if kind not in READ_KINDS:
                raise UsageError(f"{t!r} is not a secret source")
            sources.add(kind)
    channels = {_pick(t, Channel) for t in groups[2].split("+") if t}
    try:
        return ThreatModel(frozenset(delays), frozenset(sources), frozenset(channels))
    except ValueError as e:
        raise UsageError(str(e)) from None


def _threat_model(args) -> ThreatModel:
    if args.tm and args.preset:
        raise UsageError("use either --tm or --preset, not both")
    if args.tm:
        return parse_threat_model(args.tm)
    try:
        return preset_threat_model(args.preset or "full")
    except KeyError:
        raise UsageError(f"unknown preset {args.preset!r}") from None


def _load(path: str):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise UsageError(f"{path}: {e.strerror}") from None
    try:
        return text, parse_program(text)
    except ParseError as e:
        raise UsageError(f"{path}:{e.line}: {e.message}") from None


def _build(path: str, tm: ThreatModel):
    text, program = _load(path)
    try:
        return text, build_attack_graph(program, tm)
    except UnsupportedProgram as e:
        raise UsageError(f"{path}: {e}") from None


def _emit(text: str, out: str | None):
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_analyze(args) -> int:
    tm = _threat_model(args)
    catalog = load_catalog()
    strategy = DefenseStrategy(args.defend) if args.defend else None
    status = EXIT_CLEAN
    analyses = []
    for path in args.files:
        text, ag = _build(path, tm)
        findings = find_vulnerabilities(ag, catalog=catalog)
        plans = []
        if strategy is not None and findings:
            plans.append(apply_defense(ag, strategy, findings))
        analyses.append(Analysis(os.path.basename(path), text, ag, findings, plans))
        if findings and not (plans and plans[0].sufficient):
            status = EXIT_FINDINGS
    if args.format == "json":
        _emit(render_json([report_dict(a, catalog) for a in analyses]), args.out)
    else:
        _emit("".join(render_text(a, catalog) for a in analyses), args.out)
    return status


def cmd_graph(args) -> int:
    tm = _threat_model(args)
    _, ag = _build(args.file, tm)
    if args.with_defense:
        findings = find_vulnerabilities(ag)
        if findings:
            ag = apply_defense(ag, DefenseStrategy(args.with_defense), findings).graph
    name = os.path.splitext(os.path.basename(args.file))[0]
    _emit(to_dot(ag, name), args.out)
    return EXIT_CLEAN


def cmd_variants(args) -> int:
    tm = _threat_model(args) if (args.tm or args.preset) else ThreatModel.full()
    rows = enumerate_variants(tm, load_catalog())
    if args.novel_only:
        rows = [r for r in rows if r.novel]
    if args.format == "json":
        _emit(json.dumps([r.to_dict() for r in rows], indent=2) + "\n", args.out)
        return EXIT_CLEAN
    lines = [f"{'delay':<28}{'source':<24}{'channel':<14}known"]
    for r in rows:
        known = ", ".join(r.known) if r.known else f"- ({r.status})"
        lines.append(f"{r.delay.value:<28}{r.source.value:<24}{r.channel.value:<14}{known}")
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_CLEAN


def cmd_catalog(args) -> int:
    catalog = load_catalog()
    templates = find_templates(args.name, catalog) if args.name else list(catalog)
    if args.format == "json":
        _emit(json.dumps([t.to_dict() for t in templates], indent=2) + "\n", args.out)
        return EXIT_CLEAN
    lines = []
    for t in templates:
        lines.append(f"{t.name:<24}{t.cve or '-':<16}{t.authorization}  |  {t.access}")
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_CLEAN


def _add_tm(p):
    p.add_argument("--tm", help="threat model: DELAYS,SOURCES[,CHANNELS], '+' joins alternatives")
    p.add_argument("--preset", help="catalog preset (e.g. spectre-v1, meltdown, mds, full)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="specdep", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"specdep {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    strategies = [s.value for s in DefenseStrategy]
    formats = ["text", "json"]

    p = sub.add_parser("analyze", help="find authorization races in SpecIR files")
    p.add_argument("files", nargs="+", metavar="FILE")
    _add_tm(p)
    p.add_argument("--defend", choices=strategies, help="apply and verify a defense strategy")
    p.add_argument("--format", choices=formats, default="text")
    p.add_argument("--out", help="write the report here instead of stdout")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("graph", help="export the attack graph as DOT")
    p.add_argument("file", metavar="FILE")
    _add_tm(p)
    p.add_argument("--with-defense", choices=strategies)
    p.add_argument("--out")
    p.set_defaults(func=cmd_graph)

    p = sub.add_parser("variants", help="enumerate delay/source/channel combinations")
    _add_tm(p)
    p.add_argument("--novel-only", action="store_true")
    p.add_argument("--format", choices=formats, default="text")
    p.add_argument("--out")
    p.set_defaults(func=cmd_variants)

    p = sub.add_parser("catalog", help="list known attack variants")
    p.add_argument("--name", help="shell-style name filter, e.g. 'Foreshadow*'")
    p.add_argument("--format", choices=formats, default="text")
    p.add_argument("--out")
    p.set_defaults(func=cmd_catalog)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_CLEAN
    try:
        return args.func(args)
    except (UsageError, CatalogError) as e:
        print(f"specdep: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
