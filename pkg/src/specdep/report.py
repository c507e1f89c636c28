"""JSON and text renderings of an analysis."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

from . import __version__
from .builder import AttackGraph
from .catalog import Catalog
from .defense import DefensePlan, RaceFinding

__all__ = ["SCHEMA", "Analysis", "report_dict", "render_json", "render_text"]

SCHEMA = 1


@dataclass
class Analysis:
    program_id: str
    source: str
    graph: AttackGraph
    findings: list[RaceFinding]
    plans: list[DefensePlan] = field(default_factory=list)

    @property
    def sha256(self) -> str:
        return hashlib.sha256(self.source.encode("utf-8")).hexdigest()


def _node(ag: AttackGraph, n: int) -> dict:
    return {"id": n, "label": ag.label(n), "role": ag.role(n).value}


def _variants(f: RaceFinding, catalog: Catalog) -> list[dict]:
    out = []
    for name, quality in f.matched_variants:
        t = catalog.get(name)
        out.append(
            {
                "template": name,
                "quality": quality,
                "cve": t.cve,
                "authorization": t.authorization,
                "access": t.access,
            }
        )
    return out


def _finding(ag: AttackGraph, f: RaceFinding, catalog: Catalog) -> dict:
    return {
        "authorization": _node(ag, f.authorization),
        "access": _node(ag, f.access),
        "access_role": f.access_role.value,
        "severity": f.severity,
        "secret_sources": [ag.label(s) for s in f.secret_sources],
        "channel_path": [ag.label(n) for n in f.channel_path],
        "variants": _variants(f, catalog),
    }


def _plan(ag: AttackGraph, p: DefensePlan, catalog: Catalog) -> dict:
    g = p.graph if p.graph is not None else ag
    return {
        "strategy": p.strategy.value,
        "sufficient": p.sufficient,
        "inserted_edges": [[g.label(u), g.label(v), "security-dep"] for u, v in p.inserted_edges],
        "new_nodes": list(p.new_nodes),
        "removed_edges": [[ag.label(u), ag.label(v)] for u, v in p.removed_edges],
        "restored_edges": len(p.restored_edges),
        "residual": [_finding(g, f, catalog) for f in (p.verdict.residual if p.verdict else ())],
        "note": p.note,
    }


def report_dict(a: Analysis, catalog: Catalog) -> dict:
    ag = a.graph
    exact = sum(1 for f in a.findings if any(q == "exact" for _, q in f.matched_variants))
    return {
        "schema": SCHEMA,
        "tool": {"name": "specdep", "version": __version__},
        "program": {"id": a.program_id, "sha256": a.sha256},
        "threat_model": ag.threat_model.to_dict(),
        "nodes": [_node(ag, n) for n in range(len(ag))],
        "findings": [_finding(ag, f, catalog) for f in a.findings],
        "plans": [_plan(ag, p, catalog) for p in a.plans],
        "summary": {
            "findings": len(a.findings),
            "exfiltration": sum(1 for f in a.findings if f.channel_path),
            "unclassified": len(a.findings) - exact,
        },
    }


def render_json(reports: list[dict]) -> str:
    body = reports[0] if len(reports) == 1 else reports
    return json.dumps(body, indent=2, ensure_ascii=False) + "\n"


def render_text(a: Analysis, catalog: Catalog) -> str:
    ag = a.graph
    lines = [
        f"{a.program_id}: {len(a.findings)} finding(s) under {ag.threat_model.describe()}"
    ]
    for k, f in enumerate(a.findings, 1):
        lines.append(
            f"  [{k}] {ag.label(f.authorization)}  races  {ag.label(f.access)}"
            f"  ({f.access_role.value}, {f.severity})"
        )
        if f.channel_path:
            lines.append("      channel: " + " -> ".join(ag.label(n) for n in f.channel_path))
        if not f.matched_variants:
            lines.append("      no known variant (novel)")
        for name, quality in f.matched_variants:
            t = catalog.get(name)
            cve = f" ({t.cve})" if t.cve else ""
            lines.append(f"      {name}{cve}, {quality} match")
            lines.append(f"        authorization: {t.authorization}")
            lines.append(f"        illegal access: {t.access}")
    for p in a.plans:
        verdict = "sufficient" if p.sufficient else "insufficient"
        g = p.graph if p.graph is not None else ag
        lines.append(f"  defense {p.strategy.value}: {p.edge_count} edge(s), {verdict}")
        for u, v in p.inserted_edges:
            lines.append(f"      {g.label(u)} => {g.label(v)}")
        if p.note:
            lines.append(f"      note: {p.note}")
        if p.verdict and p.verdict.residual:
            for f in p.verdict.residual:
                lines.append(f"      residual: {g.label(f.authorization)} races {g.label(f.access)}")
    return "\n".join(lines) + "\n"
