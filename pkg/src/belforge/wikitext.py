"""Wikitext cleanup with link offset tracking, plus the rule-based
sentence splitter used for corpus compilation.
"""

import re
from dataclasses import dataclass

# namespace prefixes whose links are dropped wholesale (media/category links)
DEFAULT_DROP_PREFIXES = frozenset({
    "file", "image", "category", "bestand", "afbeelding", "categorie",
})

DEFAULT_ABBREVIATIONS = frozenset({
    "ca.", "bijv.", "bv.", "o.a.", "dr.", "prof.", "nr.", "e.g.", "i.e.",
    "etc.", "resp.", "afb.", "blz.", "jr.", "sr.", "st.", "vs.",
})

_COMMENT_RE = re.compile(r"<!--.*?-->", re.S)
_REF_RE = re.compile(r"<ref\b[^>/]*/>|<ref\b[^>]*>.*?</ref>", re.S | re.I)
_HEADING_RE = re.compile(r"^(={1,6})\s*(.*?)\s*\1\s*$", re.M)
_QUOTES_RE = re.compile(r"'{2,}")


@dataclass
class LinkSpan:
    start: int
    end: int
    anchor: str
    target: str


def _drop_templates(markup):
    """Remove balanced {{...}} regions (nested). An unbalanced opener drops
    the remainder of the region and counts one warning."""
    out = []
    i = 0
    depth = 0
    n = len(markup)
    while i < n:
        if markup.startswith("{{", i):
            depth += 1
            i += 2
        elif depth and markup.startswith("}}", i):
            depth -= 1
            i += 2
        elif depth:
            i += 1
        else:
            out.append(markup[i])
            i += 1
    return "".join(out), (1 if depth else 0)


def _resolve_links(markup, drop_prefixes):
    """Convert [[T|a]] / [[T]] to anchor text, recording offsets into the
    cleaned string. Media/category links and nested-bracket constructs are
    dropped entirely so pipes never leak into the output."""
    pieces = []
    links = []
    pos = 0  # length of cleaned output so far
    i = 0
    n = len(markup)
    while i < n:
        if markup.startswith("[[", i):
            j = i + 2
            depth = 1
            nested = False
            while j < n:
                if markup.startswith("[[", j):
                    depth += 1
                    nested = True
                    j += 2
                elif markup.startswith("]]", j):
                    depth -= 1
                    j += 2
                    if depth == 0:
                        break
                else:
                    j += 1
            if depth != 0:
                # unbalanced opener: treat the brackets as plain text removal
                i += 2
                continue
            inner = markup[i + 2:j - 2]
            parts = inner.split("|")
            target = parts[0].strip()
            prefix = target.split(":", 1)[0].strip().lower() if ":" in target else ""
            if nested or len(parts) > 2 or not target or prefix in drop_prefixes:
                i = j
                continue
            anchor = parts[1] if len(parts) == 2 else target
            # section anchors link to the page itself
            page = target.split("#", 1)[0].strip() or target
            if anchor:
                pieces.append(anchor)
                links.append(LinkSpan(pos, pos + len(anchor), anchor, page))
                pos += len(anchor)
            i = j
        else:
            pieces.append(markup[i])
            pos += 1
            i += 1
    return "".join(pieces), links


def strip_wikitext(markup, drop_prefixes=DEFAULT_DROP_PREFIXES):
    """Clean wikitext to plain text, returning (clean_text, links, warnings).

    Removes comments, refs, templates, heading markers and quote runs,
    then resolves internal links while tracking their char offsets into
    the cleaned text.
    """
    s = _COMMENT_RE.sub("", markup)
    s = _REF_RE.sub("", s)
    s, warnings = _drop_templates(s)
    s = _HEADING_RE.sub(r"\2", s)
    s = _QUOTES_RE.sub("", s)
    clean, links = _resolve_links(s, drop_prefixes)
    return clean, links, warnings


def split_sentences(text, abbreviations=DEFAULT_ABBREVIATIONS):
    """Split plain text into (start, end) sentence spans.

    A boundary is a '.', '!' or '?' followed by whitespace and an uppercase
    letter or digit, unless the token ending at the punctuation is a known
    abbreviation. Spans are disjoint, ordered, and cover every
    non-whitespace character.
    """
    abbrevs = {a.lower() for a in abbreviations}
    spans = []
    n = len(text)
    i = 0
    # skip leading whitespace
    while i < n and text[i].isspace():
        i += 1
    start = i
    while i < n:
        c = text[i]
        if c in ".!?":
            j = i + 1
            while j < n and text[j].isspace():
                j += 1
            if j > i + 1 and j < n and (text[j].isupper() or text[j].isdigit()):
                # token ending at the punctuation, for the abbreviation check
                k = i
                while k > 0 and not text[k - 1].isspace():
                    k -= 1
                token = text[k:i + 1].lower()
                if not (c == "." and token in abbrevs):
                    spans.append((start, i + 1))
                    start = j
                    i = j
                    continue
        i += 1
    # trailing sentence: trim trailing whitespace
    end = n
    while end > start and text[end - 1].isspace():
        end -= 1
    if end > start:
        spans.append((start, end))
    return spans
