"""Shared fixture generators for the test suite: random strings, synthetic
synonym ontologies, and edit-distance perturbed mentions.
"""

import numpy as np

from belforge.corpus import CorpusSlice, MentionAnnotation, SentenceRecord
from belforge.ontology import OntologyRecord, TermRecord

ALPHABET = "abcdefghijklmnopqrstuvwxyz"


def random_word(rng, lo=4, hi=10):
    n = int(rng.integers(lo, hi + 1))
    return "".join(ALPHABET[i] for i in rng.integers(0, len(ALPHABET), n))


def perturb(rng, word, n_edits=1):
    """Apply random character edits (substitute/insert/delete/swap)."""
    chars = list(word)
    for _ in range(n_edits):
        op = rng.integers(0, 4)
        pos = int(rng.integers(0, len(chars)))
        if op == 0:
            chars[pos] = ALPHABET[int(rng.integers(0, len(ALPHABET)))]
        elif op == 1:
            chars.insert(pos, ALPHABET[int(rng.integers(0, len(ALPHABET)))])
        elif op == 2 and len(chars) > 2:
            del chars[pos]
        elif len(chars) > 1:
            other = int(rng.integers(0, len(chars)))
            chars[pos], chars[other] = chars[other], chars[pos]
    return "".join(chars)


def make_synthetic_ontology(seed=0, n_concepts=200, variants=4, n_affixes=30,
                            group="DISO"):
    """Concepts with a distinctive core string per CUI; synonyms combine a
    lightly perturbed core with noisy affixes drawn from a shared pool.

    Returns (records, cores) with cores mapping cui -> core string.
    """
    rng = np.random.default_rng(seed)
    affixes = [random_word(rng, 3, 6) for _ in range(n_affixes)]
    records = []
    cores = {}
    seen_cores = set()
    for i in range(n_concepts):
        core = random_word(rng, 6, 10)
        while core in seen_cores:
            core = random_word(rng, 6, 10)
        seen_cores.add(core)
        cui = f"C{1000000 + i:07d}"
        cores[cui] = core
        seen_terms = set()
        for v in range(variants):
            body = core if v == 0 else perturb(rng, core, 1)
            affix = affixes[int(rng.integers(0, n_affixes))]
            term = f"{affix} {body}" if rng.random() < 0.5 else f"{body} {affix}"
            if term in seen_terms:
                continue
            seen_terms.add(term)
            records.append(OntologyRecord(term_id=len(records), cui=cui,
                                          text=term, vocab="SYN", group=group))
    return records, cores


def make_perturbed_mentions(cores, seed=1, n=500, core_edits=2, n_affixes=30):
    """Held-out mentions: heavier perturbation of a concept core plus a
    fresh affix. Returns a list of (mention_text, gold_cui)."""
    rng = np.random.default_rng(seed)
    affixes = [random_word(rng, 3, 6) for _ in range(n_affixes)]
    cuis = sorted(cores)
    out = []
    for _ in range(n):
        cui = cuis[int(rng.integers(0, len(cuis)))]
        body = perturb(rng, cores[cui], core_edits)
        affix = affixes[int(rng.integers(0, n_affixes))]
        text = f"{affix} {body}" if rng.random() < 0.5 else f"{body} {affix}"
        out.append((text, cui))
    return out


def mentions_as_slice(mention_pairs):
    """Wrap (text, cui) pairs as a CorpusSlice of weak mentions."""
    sentences = []
    mentions = []
    for i, (text, cui) in enumerate(mention_pairs):
        sentences.append(SentenceRecord(sentence_id=i, page_title=f"p{i}",
                                        text=text, token_count=len(text.split())))
        mentions.append(MentionAnnotation(
            sentence_id=i, start=0, end=len(text), anchor=text,
            target_title=f"p{i}", cui=cui, qid=f"Q{i}"))
    return CorpusSlice(sentences=sentences, mentions=mentions)


def ontology_as_terms(records):
    """Re-wrap OntologyRecords as TermRecords (for pipeline idempotence)."""
    return [TermRecord(term_id=r.term_id, cui=r.cui, language="", vocab=r.vocab,
                       source_code="", text=r.text) for r in records]


def random_unit_rows(rng, n, k):
    M = rng.normal(size=(n, k))
    return M / np.linalg.norm(M, axis=1, keepdims=True)
