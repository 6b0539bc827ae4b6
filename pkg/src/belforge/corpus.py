"""Weakly labeled corpus compilation: join a knowledge-graph article->CUI
mapping with a MediaWiki XML dump, extract sentences whose hyperlink
anchors point at concept-linked articles, and build the deduplicated,
ontology-filtered star subset.
"""

import hashlib
import json
import os
import re
import urllib.parse
import urllib.request
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from xml.sax.saxutils import escape, quoteattr

import numpy as np

from .errors import DataError, NetworkError
from .wikitext import DEFAULT_ABBREVIATIONS, DEFAULT_DROP_PREFIXES, split_sentences, strip_wikitext

QID_RE = re.compile(r"^Q[0-9]+$")

SPARQL_QUERY_TEMPLATE = """\
SELECT ?concept ?conceptLabel ?cui ?article  WHERE {{
  ?concept wdt:{property_id} ?cui .
  ?article schema:about ?concept .
  ?article schema:isPartOf
        <{site_url}>.

  SERVICE wikibase:label {{
    bd:serviceParam wikibase:language "{language}"
  }}
}}
"""


@dataclass
class ArticleCuiMap:
    entries: dict = field(default_factory=dict)  # normalized title -> (qid, cui)
    duplicates: int = 0
    skipped: int = 0


@dataclass
class WikiPage:
    page_id: int
    title: str
    namespace: int
    wikitext: str


@dataclass
class SentenceRecord:
    sentence_id: int
    page_title: str
    text: str
    token_count: int


@dataclass
class MentionAnnotation:
    sentence_id: int
    start: int
    end: int
    anchor: str
    target_title: str
    cui: str
    qid: str


@dataclass
class CorpusStats:
    sentences: int = 0
    mentions: int = 0
    unique_mentions: int = 0
    unseen_mentions: int = 0
    cuis: int = 0
    unique_cuis: int = 0
    unlinkable_cuis: int = 0
    avg_tokens_per_sentence: float = 0.0

    def to_json(self):
        return json.dumps(self.__dict__, sort_keys=True, separators=(",", ":"))


@dataclass
class CorpusSlice:
    sentences: list = field(default_factory=list)
    mentions: list = field(default_factory=list)


def normalize_title(title):
    """Underscores to spaces, collapse whitespace, case-fold the first char."""
    t = " ".join(title.replace("_", " ").split())
    return t[:1].casefold() + t[1:] if t else t


def load_article_map_tsv(stream):
    """Parse offline mapping rows ``qid<TAB>cui<TAB>article_title``."""
    amap = ArticleCuiMap()
    for line in stream:
        if not line.strip():
            continue
        parts = line.rstrip("\n").split("\t")
        if len(parts) < 3 or not QID_RE.match(parts[0].strip()):
            amap.skipped += 1
            continue
        qid, cui, title = parts[0].strip(), parts[1].strip(), parts[2]
        key = normalize_title(title)
        if not key or not cui:
            amap.skipped += 1
        elif key in amap.entries:
            amap.duplicates += 1
        else:
            amap.entries[key] = (qid, cui)
    return amap


def build_sparql_query(site_url, property_id="P2892", language="nl"):
    return SPARQL_QUERY_TEMPLATE.format(
        property_id=property_id, site_url=site_url, language=language)


def _default_fetcher(url):
    try:
        with urllib.request.urlopen(url, timeout=60) as resp:
            if resp.status >= 400:
                raise NetworkError(f"SPARQL endpoint returned HTTP {resp.status}")
            return resp.read()
    except NetworkError:
        raise
    except OSError as e:
        raise NetworkError(f"SPARQL endpoint unreachable: {e}") from e


def load_article_map_sparql(endpoint, site_url, property_id="P2892",
                            language="nl", fetcher=None, cache_dir=None):
    """Query the knowledge graph for article -> CUI bindings.

    Responses are standard SPARQL-JSON; malformed bindings are skipped with
    a counter. Results may be cached on disk (``cache_dir`` or the
    BELFORGE_CACHE_DIR environment variable).
    """
    query = build_sparql_query(site_url, property_id, language)
    url = endpoint + "?" + urllib.parse.urlencode({"query": query, "format": "json"})
    cache_dir = cache_dir or os.environ.get("BELFORGE_CACHE_DIR")
    cache_path = None
    raw = None
    if cache_dir:
        digest = hashlib.sha256(url.encode("utf-8")).hexdigest()
        cache_path = os.path.join(cache_dir, digest + ".json")
        if os.path.exists(cache_path):
            with open(cache_path, "rb") as f:
                raw = f.read()
    if raw is None:
        raw = (fetcher or _default_fetcher)(url)
        if cache_path:
            os.makedirs(cache_dir, exist_ok=True)
            with open(cache_path, "wb") as f:
                f.write(raw)

    try:
        payload = json.loads(raw)
        bindings = payload["results"]["bindings"]
    except (ValueError, KeyError, TypeError) as e:
        raise DataError(f"malformed SPARQL response: {e}") from e

    amap = ArticleCuiMap()
    for b in bindings:
        try:
            qid = b["concept"]["value"].rstrip("/").rsplit("/", 1)[-1]
            cui = b["cui"]["value"]
            article = b["article"]["value"]
        except (KeyError, TypeError):
            amap.skipped += 1
            continue
        title = urllib.parse.unquote(article.rstrip("/").rsplit("/", 1)[-1])
        key = normalize_title(title)
        if not key or not cui or not QID_RE.match(qid):
            amap.skipped += 1
        elif key in amap.entries:
            amap.duplicates += 1
        else:
            amap.entries[key] = (qid, cui)
    return amap


def parse_dump(stream):
    """Stream namespace-0 pages from MediaWiki-export XML in document order.

    Memory is bounded by one page; pages without a <text> element are
    skipped. Malformed XML raises DataError with the parser position.
    """
    def localname(tag):
        return tag.rsplit("}", 1)[-1]

    try:
        context = ET.iterparse(stream, events=("end",))
        for _event, elem in context:
            if localname(elem.tag) != "page":
                continue
            title = ns = page_id = None
            text = None
            have_text = False
            for child in elem.iter():
                ln = localname(child.tag)
                if ln == "title" and title is None:
                    title = child.text or ""
                elif ln == "ns" and ns is None:
                    ns = int((child.text or "0").strip() or 0)
                elif ln == "id" and page_id is None:
                    page_id = int((child.text or "0").strip() or 0)
                elif ln == "text" and not have_text:
                    text = child.text or ""
                    have_text = True
            if ns in (None, 0) and have_text:
                yield WikiPage(page_id=page_id or 0, title=title or "",
                               namespace=ns or 0, wikitext=text)
            elem.clear()
    except ET.ParseError as e:
        raise DataError(f"malformed dump XML at {e.position}: {e}") from e


def compile_corpus(pages, article_map, abbreviations=DEFAULT_ABBREVIATIONS,
                   drop_prefixes=DEFAULT_DROP_PREFIXES, ontology=None):
    """Select sentences containing at least one mapped hyperlink.

    Returns (sentences, mentions, stats). Stats fields that require an
    ontology (unseen mentions, unlinkable CUIs) are computed only when one
    is supplied.
    """
    sentences = []
    mentions = []
    for page in pages:
        clean, links, _warn = strip_wikitext(page.wikitext, drop_prefixes)
        spans = split_sentences(clean, abbreviations)
        for s_start, s_end in spans:
            in_span = [
                lk for lk in links
                if lk.start >= s_start and lk.end <= s_end
                and normalize_title(lk.target) in article_map.entries
            ]
            if not in_span:
                continue
            sid = len(sentences)
            text = clean[s_start:s_end]
            sentences.append(SentenceRecord(
                sentence_id=sid, page_title=page.title, text=text,
                token_count=len(text.split())))
            for lk in in_span:
                qid, cui = article_map.entries[normalize_title(lk.target)]
                mentions.append(MentionAnnotation(
                    sentence_id=sid, start=lk.start - s_start,
                    end=lk.end - s_start, anchor=lk.anchor,
                    target_title=lk.target, cui=cui, qid=qid))
    stats = compute_stats(sentences, mentions, ontology)
    return sentences, mentions, stats


def compute_stats(sentences, mentions, ontology=None):
    stats = CorpusStats(
        sentences=len(sentences),
        mentions=len(mentions),
        unique_mentions=len({m.anchor for m in mentions}),
        cuis=len(mentions),
        unique_cuis=len({m.cui for m in mentions}),
    )
    if sentences:
        stats.avg_tokens_per_sentence = float(
            np.mean([s.token_count for s in sentences]))
    if ontology is not None:
        terms = {r.text for r in ontology}
        known_cuis = {r.cui for r in ontology}
        stats.unseen_mentions = sum(1 for m in mentions if m.anchor not in terms)
        stats.unlinkable_cuis = sum(1 for m in mentions if m.cui not in known_cuis)
    return stats


def build_star_subset(sentences, mentions, ontology, split_ratio=0.8, seed=0):
    """Deduplicated, ontology-filtered subset split into train/validation.

    Keeps the first occurrence of each unique mention string (exact,
    case-sensitive), drops mentions whose CUI is absent from the ontology,
    then partitions mentions randomly by seed at split_ratio.
    """
    if not 0 < split_ratio < 1:
        raise ValueError("split_ratio must be in (0, 1)")
    known_cuis = {r.cui for r in ontology}
    seen = set()
    kept = []
    for m in sorted(mentions, key=lambda m: (m.sentence_id, m.start)):
        if m.anchor in seen:
            continue
        seen.add(m.anchor)
        if m.cui in known_cuis:
            kept.append(m)

    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(kept))
    n_train = int(len(kept) * split_ratio)
    train_ids = set(perm[:n_train].tolist())
    by_id = {s.sentence_id: s for s in sentences}

    def make_slice(idxs):
        ms = sorted((kept[i] for i in idxs), key=lambda m: (m.sentence_id, m.start))
        sids = sorted({m.sentence_id for m in ms})
        return CorpusSlice(sentences=[by_id[s] for s in sids], mentions=ms)

    return (make_slice([i for i in range(len(kept)) if i in train_ids]),
            make_slice([i for i in range(len(kept)) if i not in train_ids]))


def serialize_corpus(corpus_slice, sink):
    """Write a corpus slice as XML with inline mention elements."""
    ms_by_sid = {}
    for m in corpus_slice.mentions:
        ms_by_sid.setdefault(m.sentence_id, []).append(m)
    lines = ["<corpus>"]
    for s in corpus_slice.sentences:
        parts = [f"<sentence id={quoteattr(str(s.sentence_id))} page={quoteattr(s.page_title)}>"]
        pos = 0
        for m in sorted(ms_by_sid.get(s.sentence_id, []), key=lambda m: m.start):
            parts.append(escape(s.text[pos:m.start]))
            parts.append(
                f"<mention cui={quoteattr(m.cui)} qid={quoteattr(m.qid)} "
                f"start={quoteattr(str(m.start))} end={quoteattr(str(m.end))} "
                f"target={quoteattr(m.target_title)}>{escape(m.anchor)}</mention>")
            pos = m.end
        parts.append(escape(s.text[pos:]))
        parts.append("</sentence>")
        lines.append("".join(parts))
    lines.append("</corpus>")
    sink.write("\n".join(lines) + "\n")


def parse_corpus(stream):
    """Parse the corpus XML schema back into a CorpusSlice."""
    try:
        tree = ET.parse(stream)
    except ET.ParseError as e:
        raise DataError(f"corpus XML parse error at {e.position}: {e}") from e
    root = tree.getroot()
    if root.tag != "corpus":
        raise DataError(f"expected <corpus> root, found <{root.tag}>")
    out = CorpusSlice()
    for sent in root:
        if sent.tag != "sentence":
            raise DataError(f"unexpected element <{sent.tag}> under <corpus>")
        sid = int(sent.get("id"))
        pieces = [sent.text or ""]
        pending = []
        for node in sent:
            if node.tag != "mention":
                raise DataError(f"unexpected element <{node.tag}> in sentence {sid}")
            anchor = node.text or ""
            start = len("".join(pieces))
            pending.append((node, anchor, start))
            pieces.append(anchor)
            pieces.append(node.tail or "")
        text = "".join(pieces)
        out.sentences.append(SentenceRecord(
            sentence_id=sid, page_title=sent.get("page", ""), text=text,
            token_count=len(text.split())))
        for node, anchor, start in pending:
            declared_start = int(node.get("start"))
            declared_end = int(node.get("end"))
            if declared_start != start or declared_end != start + len(anchor):
                raise DataError(
                    f"sentence {sid}: mention offsets {declared_start}:{declared_end} "
                    f"do not match reconstructed text position {start}")
            out.mentions.append(MentionAnnotation(
                sentence_id=sid, start=start, end=start + len(anchor),
                anchor=anchor, target_title=node.get("target", ""),
                cui=node.get("cui"), qid=node.get("qid", "")))
    return out
