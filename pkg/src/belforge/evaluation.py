"""Accuracy and 1-distance accuracy over a concept relation graph, with
per-semantic-group breakdowns and a micro-averaged total.
"""

import json
from dataclasses import dataclass, field


@dataclass
class GoldMention:
    mention: str
    gold_cui: str
    group: str


@dataclass
class RelationGraph:
    adjacency: dict = field(default_factory=dict)  # cui -> set of cuis

    def connected(self, a, b):
        return b in self.adjacency.get(a, ())


@dataclass
class GroupResult:
    group: str
    count: int
    accuracy: float
    one_dist_accuracy: float


@dataclass
class EvalReport:
    groups: list
    total: GroupResult
    metadata: dict = field(default_factory=dict)


def build_relation_graph(rows):
    """Undirected, relation-type-agnostic adjacency; duplicates and reversed
    duplicates collapse, self-loops are dropped."""
    adj = {}
    for row in rows:
        if row.cui1 == row.cui2:
            continue
        adj.setdefault(row.cui1, set()).add(row.cui2)
        adj.setdefault(row.cui2, set()).add(row.cui1)
    return RelationGraph(adjacency=adj)


def evaluate(predictions, gold, graph, per_group=True, metadata=None):
    """Score predictions against gold mentions.

    ``predictions`` maps mention string -> predicted CUI; a missing
    prediction counts as wrong for both metrics. A prediction is 1-distance
    correct when it equals the gold CUI or shares a relation edge with it.
    """
    def tally(items):
        exact = 0
        one_dist = 0
        for g in items:
            pred = predictions.get(g.mention)
            if pred == g.gold_cui:
                exact += 1
                one_dist += 1
            elif pred is not None and graph.connected(pred, g.gold_cui):
                one_dist += 1
        n = len(items)
        return n, (exact / n if n else 0.0), (one_dist / n if n else 0.0)

    n, acc, od = tally(gold)
    total = GroupResult(group="TOTAL", count=n, accuracy=acc, one_dist_accuracy=od)
    groups = []
    if per_group:
        by_group = {}
        for g in gold:
            by_group.setdefault(g.group, []).append(g)
        for name in sorted(by_group):
            gn, gacc, god = tally(by_group[name])
            groups.append(GroupResult(group=name, count=gn, accuracy=gacc,
                                      one_dist_accuracy=god))
        groups.sort(key=lambda r: (-r.count, r.group))
    return EvalReport(groups=groups, total=total, metadata=dict(metadata or {}))


def report_to_json(report):
    payload = {
        "groups": [
            {"group": r.group, "count": r.count, "accuracy": r.accuracy,
             "one_dist_accuracy": r.one_dist_accuracy}
            for r in report.groups
        ],
        "total": {"group": "TOTAL", "count": report.total.count,
                  "accuracy": report.total.accuracy,
                  "one_dist_accuracy": report.total.one_dist_accuracy},
        "metadata": report.metadata,
    }
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def report_from_json(text):
    payload = json.loads(text)
    groups = [GroupResult(group=g["group"], count=g["count"],
                          accuracy=g["accuracy"],
                          one_dist_accuracy=g["one_dist_accuracy"])
              for g in payload["groups"]]
    t = payload["total"]
    total = GroupResult(group="TOTAL", count=t["count"], accuracy=t["accuracy"],
                        one_dist_accuracy=t["one_dist_accuracy"])
    return EvalReport(groups=groups, total=total, metadata=payload["metadata"])


def render_report(report):
    """Aligned text table, groups by descending count, percentages with one
    decimal, total row last."""
    rows = [(r.group, r.count, r.accuracy, r.one_dist_accuracy)
            for r in report.groups]
    rows.append(("TOTAL", report.total.count, report.total.accuracy,
                 report.total.one_dist_accuracy))
    lines = [f"{'Group':<8}{'#':>6}  {'Accuracy':>9}  {'1-dist acc.':>11}"]
    for name, count, acc, od in rows:
        lines.append(f"{name:<8}{count:>6}  {100 * acc:>8.1f}%  {100 * od:>10.1f}%")
    return "\n".join(lines) + "\n"
