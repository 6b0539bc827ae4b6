"""Ontology construction: parse pipe-delimited source files and run the
multi-step filter / crosswalk / enrichment pipeline down to a cleaned
term list with per-step statistics.
"""

import json
import re
from dataclasses import dataclass, field

from .errors import DataError

CUI_RE = re.compile(r"^C[0-9]{7}$")
TUI_RE = re.compile(r"^T[0-9]{3}$")

SEMANTIC_GROUPS = frozenset({
    "DISO", "CHEM", "PROC", "ANAT", "LIVB", "PHEN", "DEVI", "PHYS",
    "ACTI", "OBJC", "GENE", "OCCU", "CONC", "OTHER",
})


@dataclass
class TermRecord:
    term_id: int
    cui: str
    language: str
    vocab: str
    source_code: str
    text: str


@dataclass
class SemanticTypeRow:
    cui: str
    tui: str
    type_name: str


@dataclass
class SemanticGroupMap:
    entries: dict  # tui -> group code

    def group_for(self, tui):
        return self.entries.get(tui, "OTHER")


@dataclass
class RelationRow:
    cui1: str
    rel: str
    cui2: str
    vocab: str


@dataclass
class CrosswalkRow:
    sctid: int
    text: str


@dataclass
class FilterConfig:
    drop_vocabs: frozenset = frozenset()
    # list of (literal substring, frozenset of vocabs it applies to)
    descriptive_subterm_patterns: list = field(default_factory=list)
    drop_tuis: frozenset = frozenset()
    drug_vocabs: frozenset = frozenset()
    dedupe_case_insensitive: bool = True
    bridge_vocab: str = "SNOMEDCT_US"
    crosswalk_vocab: str = "SNOMEDCT_NL"
    crosswalk_language: str = "DUT"


@dataclass
class OntologyRecord:
    term_id: int
    cui: str
    text: str
    vocab: str
    group: str


@dataclass
class StepStats:
    steps: list = field(default_factory=list)  # (step_name, records_remaining)

    def record(self, name, count):
        self.steps.append((name, count))

    def to_json(self):
        return json.dumps(
            {"steps": [{"step": n, "remaining": c} for n, c in self.steps]},
            sort_keys=True, separators=(",", ":"))


def _split_line(line):
    # UMLS-style rows end with a trailing pipe; a trailing empty field is noise
    fields = line.rstrip("\n").split("|")
    if fields and fields[-1] == "":
        fields = fields[:-1]
    return fields


def parse_concepts(stream, column_map):
    """Parse concept lines into TermRecords.

    column_map names the field index for cui, language, vocab, source_code
    and text. Malformed lines (too few fields, bad CUI, empty text) are
    skipped and counted, not fatal. Returns (records, malformed_count).
    """
    needed = max(column_map.values()) + 1
    records = []
    malformed = 0
    for line in stream:
        if not line.strip():
            continue
        fields = _split_line(line)
        if len(fields) < needed:
            malformed += 1
            continue
        cui = fields[column_map["cui"]].strip()
        text = fields[column_map["text"]].strip()
        if not CUI_RE.match(cui) or not text:
            malformed += 1
            continue
        records.append(TermRecord(
            term_id=len(records),
            cui=cui,
            language=fields[column_map["language"]].strip(),
            vocab=fields[column_map["vocab"]].strip(),
            source_code=fields[column_map["source_code"]].strip(),
            text=text,
        ))
    return records, malformed


def parse_semantic_types(stream, column_map=None):
    """Parse cui|tui|type_name rows; malformed rows skipped and counted."""
    cm = column_map or {"cui": 0, "tui": 1, "type_name": 2}
    needed = max(cm.values()) + 1
    rows = []
    malformed = 0
    for line in stream:
        if not line.strip():
            continue
        fields = _split_line(line)
        if len(fields) < needed:
            malformed += 1
            continue
        cui = fields[cm["cui"]].strip()
        tui = fields[cm["tui"]].strip()
        if not CUI_RE.match(cui) or not TUI_RE.match(tui):
            malformed += 1
            continue
        rows.append(SemanticTypeRow(cui=cui, tui=tui,
                                    type_name=fields[cm["type_name"]].strip()))
    return rows, malformed


def parse_relations(stream, column_map=None):
    """Parse cui1|rel|cui2|vocab rows. Self-loops are dropped at parse."""
    cm = column_map or {"cui1": 0, "rel": 1, "cui2": 2, "vocab": 3}
    needed = max(cm.values()) + 1
    rows = []
    malformed = 0
    for line in stream:
        if not line.strip():
            continue
        fields = _split_line(line)
        if len(fields) < needed:
            malformed += 1
            continue
        cui1 = fields[cm["cui1"]].strip()
        cui2 = fields[cm["cui2"]].strip()
        if not CUI_RE.match(cui1) or not CUI_RE.match(cui2):
            malformed += 1
            continue
        if cui1 == cui2:
            continue
        rows.append(RelationRow(cui1=cui1, rel=fields[cm["rel"]].strip(),
                                cui2=cui2, vocab=fields[cm["vocab"]].strip()))
    return rows, malformed


def parse_crosswalk(stream, column_map=None):
    """Parse sctid|text rows from the external terminology."""
    cm = column_map or {"sctid": 0, "text": 1}
    needed = max(cm.values()) + 1
    rows = []
    malformed = 0
    for line in stream:
        if not line.strip():
            continue
        fields = _split_line(line)
        if len(fields) < needed:
            malformed += 1
            continue
        try:
            sctid = int(fields[cm["sctid"]].strip())
        except ValueError:
            malformed += 1
            continue
        text = fields[cm["text"]].strip()
        if sctid <= 0 or not text:
            malformed += 1
            continue
        rows.append(CrosswalkRow(sctid=sctid, text=text))
    return rows, malformed


def crosswalk_terms(targets, bridge, vocab="SNOMEDCT_NL", language="DUT",
                    start_term_id=0):
    """Map external-terminology rows to CUIs through a bridge vocabulary.

    Bridge records carry the external id as their source_code. Rows whose
    id matches exactly one distinct CUI yield a new TermRecord; ambiguous
    (>=2 CUIs) and unmatched ids are dropped. Returns
    (new_records, drop_report) with drop_report mapping sctid -> reason.
    """
    by_sctid = {}
    for rec in bridge:
        by_sctid.setdefault(rec.source_code, set()).add(rec.cui)
    out = []
    drop_report = {}
    for row in targets:
        cuis = by_sctid.get(str(row.sctid))
        if not cuis:
            drop_report[row.sctid] = "no-match"
        elif len(cuis) > 1:
            drop_report[row.sctid] = "ambiguous"
        else:
            out.append(TermRecord(
                term_id=start_term_id + len(out),
                cui=next(iter(cuis)), language=language, vocab=vocab,
                source_code=str(row.sctid), text=row.text))
    return out, drop_report


def _normalize_ws(text):
    return " ".join(text.split())


def _dedupe_key(rec, case_insensitive):
    return (rec.cui, rec.text.lower() if case_insensitive else rec.text)


def build_ontology(concepts, sty, groups, crosswalk, config):
    """Run the full filter/enrichment pipeline.

    Steps, in order: (1) drop configured vocabularies, (2) strip descriptive
    subterm substrings, (3) dedupe on (cui, text), (4) add crosswalked
    terms, (5) drop configured semantic types, (6) add drug-vocabulary
    records (set aside from the input regardless of language), (7) resolve
    semantic groups. Returns (records, step_stats).
    """
    stats = StepStats()
    drug_pool = [r for r in concepts if r.vocab in config.drug_vocabs]
    kept = [r for r in concepts if r.vocab not in config.drug_vocabs]

    # 1. vocabulary filter
    kept = [r for r in kept if r.vocab not in config.drop_vocabs]
    stats.record("drop_vocabs", len(kept))

    # 2. descriptive subterm removal (literal substrings, per-vocab)
    out = []
    for rec in kept:
        text = rec.text
        for pattern, vocabs in config.descriptive_subterm_patterns:
            if rec.vocab in vocabs and pattern in text:
                text = _normalize_ws(text.replace(pattern, " "))
        if text:
            if text != rec.text:
                rec = TermRecord(rec.term_id, rec.cui, rec.language, rec.vocab,
                                 rec.source_code, text)
            out.append(rec)
    kept = out
    stats.record("strip_descriptive_subterms", len(kept))

    # 3. dedupe, first occurrence wins
    seen = set()
    out = []
    for rec in kept:
        key = _dedupe_key(rec, config.dedupe_case_insensitive)
        if key not in seen:
            seen.add(key)
            out.append(rec)
    kept = out
    stats.record("dedupe", len(kept))

    # 4. crosswalk additions (bridged through the configured vocabulary)
    bridge = [r for r in kept if r.vocab == config.bridge_vocab]
    added, _report = crosswalk_terms(
        crosswalk, bridge, vocab=config.crosswalk_vocab,
        language=config.crosswalk_language)
    for rec in added:
        key = _dedupe_key(rec, config.dedupe_case_insensitive)
        if key not in seen:
            seen.add(key)
            kept.append(rec)
    stats.record("crosswalk_add", len(kept))

    # 5. semantic type filter
    cui_tuis = {}
    for row in sty:
        cui_tuis.setdefault(row.cui, []).append(row.tui)
    kept = [r for r in kept
            if not any(t in config.drop_tuis for t in cui_tuis.get(r.cui, ()))]
    stats.record("drop_semantic_types", len(kept))

    # 6. drug-name additions, regardless of language
    for rec in drug_pool:
        key = _dedupe_key(rec, config.dedupe_case_insensitive)
        if key not in seen:
            seen.add(key)
            kept.append(rec)
    stats.record("drug_vocab_add", len(kept))

    # 7. group resolution: first semantic-type row per cui in input order
    first_tui = {}
    for row in sty:
        first_tui.setdefault(row.cui, row.tui)
    records = [
        OntologyRecord(term_id=i, cui=r.cui, text=r.text, vocab=r.vocab,
                       group=groups.group_for(first_tui.get(r.cui, "")))
        for i, r in enumerate(kept)
    ]
    stats.record("assign_groups", len(records))
    return records, stats


def serialize_ontology(records, sink):
    """One JSON object per line, ordered by term_id."""
    for rec in sorted(records, key=lambda r: r.term_id):
        sink.write(json.dumps(
            {"term_id": rec.term_id, "cui": rec.cui, "text": rec.text,
             "vocab": rec.vocab, "group": rec.group},
            ensure_ascii=False, sort_keys=True, separators=(",", ":")) + "\n")


def parse_ontology(stream):
    records = []
    for lineno, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            records.append(OntologyRecord(
                term_id=int(obj["term_id"]), cui=obj["cui"], text=obj["text"],
                vocab=obj["vocab"], group=obj["group"]))
        except (ValueError, KeyError, TypeError) as e:
            raise DataError(f"ontology line {lineno}: {e}") from e
    return records
