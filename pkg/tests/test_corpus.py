import io
import json

import numpy as np
import pytest

from belforge import corpus
from belforge.errors import DataError, NetworkError
from belforge.ontology import OntologyRecord

DUMP_HEADER = '<mediawiki xmlns="http://www.mediawiki.org/xml/export-0.10/">'


def make_dump(pages):
    parts = [DUMP_HEADER]
    for pid, title, ns, text in pages:
        body = "" if text is None else f"<text>{text}</text>"
        parts.append(
            f"<page><title>{title}</title><ns>{ns}</ns><id>{pid}</id>"
            f"<revision><id>{pid * 100}</id>{body}</revision></page>")
    parts.append("</mediawiki>")
    return io.BytesIO("".join(parts).encode("utf-8"))


def simple_map(entries):
    amap = corpus.ArticleCuiMap()
    for title, qid, cui in entries:
        amap.entries[corpus.normalize_title(title)] = (qid, cui)
    return amap


class TestArticleMapTsv:
    def test_normalization(self):
        amap = corpus.load_article_map_tsv(
            io.StringIO("Q42\tC0000001\tHartinfarct\n"))
        assert amap.entries == {"hartinfarct": ("Q42", "C0000001")}

    def test_underscores_to_spaces(self):
        amap = corpus.load_article_map_tsv(
            io.StringIO("Q1\tC0000002\tZiekte_van_Crohn\n"))
        assert "ziekte van Crohn" in amap.entries

    def test_empty(self):
        amap = corpus.load_article_map_tsv(io.StringIO(""))
        assert amap.entries == {}

    def test_first_wins_on_duplicate_title(self):
        amap = corpus.load_article_map_tsv(io.StringIO(
            "Q1\tC0000001\tGriep\nQ2\tC0000002\tGriep\n"))
        assert amap.entries["griep"] == ("Q1", "C0000001")
        assert amap.duplicates == 1

    def test_malformed_rows_skipped(self):
        amap = corpus.load_article_map_tsv(io.StringIO(
            "onzin\nQ1\tC0000001\tGriep\nniet\tgenoeg\n"))
        assert len(amap.entries) == 1 and amap.skipped == 2


class TestSparql:
    def test_query_template(self):
        q = corpus.build_sparql_query("https://nl.wikipedia.org/", "P2892", "nl")
        assert "wdt:P2892" in q
        assert "<https://nl.wikipedia.org/>" in q
        assert 'wikibase:language "nl"' in q

    def test_parses_bindings(self):
        payload = {"results": {"bindings": [
            {"concept": {"value": "http://www.wikidata.org/entity/Q42"},
             "cui": {"value": "C0000001"},
             "article": {"value": "https://nl.wikipedia.org/wiki/Hartinfarct"}},
            {"broken": {}},
        ]}}
        amap = corpus.load_article_map_sparql(
            "https://example.org/sparql", "https://nl.wikipedia.org/",
            fetcher=lambda url: json.dumps(payload).encode())
        assert amap.entries == {"hartinfarct": ("Q42", "C0000001")}
        assert amap.skipped == 1

    def test_caches_response(self, tmp_path):
        payload = json.dumps({"results": {"bindings": []}}).encode()
        calls = []

        def fetcher(url):
            calls.append(url)
            return payload

        for _ in range(2):
            corpus.load_article_map_sparql(
                "https://example.org/sparql", "https://nl.wikipedia.org/",
                fetcher=fetcher, cache_dir=str(tmp_path))
        assert len(calls) == 1

    def test_network_error(self):
        def fetcher(url):
            raise NetworkError("HTTP 503")

        with pytest.raises(NetworkError):
            corpus.load_article_map_sparql(
                "https://example.org/sparql", "https://nl.wikipedia.org/",
                fetcher=fetcher)


class TestParseDump:
    def test_namespace_filter(self):
        pages = list(corpus.parse_dump(make_dump([
            (1, "Artikel", 0, "tekst"),
            (2, "Categorie:X", 14, "weg"),
        ])))
        assert [p.title for p in pages] == ["Artikel"]
        assert pages[0].page_id == 1 and pages[0].namespace == 0

    def test_empty_text_kept(self):
        pages = list(corpus.parse_dump(make_dump([(1, "Leeg", 0, "")])))
        assert pages[0].wikitext == ""

    def test_missing_text_skipped(self):
        pages = list(corpus.parse_dump(make_dump([
            (1, "Zonder", 0, None), (2, "Met", 0, "x")])))
        assert [p.title for p in pages] == ["Met"]

    def test_document_order(self):
        pages = list(corpus.parse_dump(make_dump([
            (5, "B", 0, "x"), (3, "A", 0, "y")])))
        assert [p.title for p in pages] == ["B", "A"]

    def test_malformed_xml_fatal(self):
        with pytest.raises(DataError):
            list(corpus.parse_dump(io.BytesIO(b"<mediawiki><page>")))


class TestCompileCorpus:
    def test_link_in_second_sentence_only(self):
        pages = [corpus.WikiPage(1, "Pagina", 0,
                                 "Eerste zin hier. Dit noemt [[Hartinfarct|MI]] nu.")]
        amap = simple_map([("Hartinfarct", "Q42", "C0000001")])
        sentences, mentions, stats = corpus.compile_corpus(iter(pages), amap)
        assert len(sentences) == 1 and len(mentions) == 1
        s, m = sentences[0], mentions[0]
        assert s.text == "Dit noemt MI nu."
        assert s.text[m.start:m.end] == m.anchor == "MI"
        assert m.cui == "C0000001" and m.qid == "Q42"
        assert stats.sentences == 1 and stats.mentions == 1

    def test_unmapped_target_not_selected(self):
        pages = [corpus.WikiPage(1, "P", 0, "Zie [[Onbekend artikel]] hier.")]
        sentences, mentions, _ = corpus.compile_corpus(
            iter(pages), simple_map([("Iets anders", "Q1", "C0000001")]))
        assert sentences == [] and mentions == []

    def test_anchor_matches_span_everywhere(self):
        pages = [
            corpus.WikiPage(1, "A", 0,
                            "[[Griep]] en [[Koorts|koorts]] samen. Nog een [[Griep|griepje]]."),
            corpus.WikiPage(2, "B", 0, "{{infobox}}Over [[Diabetes]]. Zonder link."),
        ]
        amap = simple_map([("Griep", "Q1", "C0000001"),
                           ("Koorts", "Q2", "C0000002"),
                           ("Diabetes", "Q3", "C0000003")])
        sentences, mentions, stats = corpus.compile_corpus(iter(pages), amap)
        by_id = {s.sentence_id: s for s in sentences}
        for m in mentions:
            assert by_id[m.sentence_id].text[m.start:m.end] == m.anchor
        assert stats.mentions == 4
        assert stats.unique_mentions == 4
        assert stats.unique_cuis == 3

    def test_stats_against_ontology(self):
        pages = [corpus.WikiPage(1, "A", 0, "Over [[Griep]] en [[Koorts]].")]
        amap = simple_map([("Griep", "Q1", "C0000001"),
                           ("Koorts", "Q2", "C0000999")])
        ontology = [OntologyRecord(0, "C0000001", "Griep", "V", "DISO")]
        _, _, stats = corpus.compile_corpus(iter(pages), amap, ontology=ontology)
        assert stats.unlinkable_cuis == 1  # C0000999 absent
        assert stats.unseen_mentions == 1  # "Koorts" not an ontology term


def star_fixture():
    sentences = [
        corpus.SentenceRecord(0, "A", "MS is erg.", 3),
        corpus.SentenceRecord(1, "B", "Over MS en griep.", 4),
    ]
    mentions = [
        corpus.MentionAnnotation(0, 0, 2, "MS", "Multiple sclerose", "C0000001", "Q1"),
        corpus.MentionAnnotation(1, 5, 7, "MS", "Multiple sclerose", "C0000001", "Q1"),
        corpus.MentionAnnotation(1, 11, 16, "griep", "Griep", "C0000002", "Q2"),
        corpus.MentionAnnotation(1, 11, 16, "koorts", "Koorts", "C0000999", "Q3"),
    ]
    ontology = [OntologyRecord(0, "C0000001", "multiple sclerose", "V", "DISO"),
                OntologyRecord(1, "C0000002", "influenza", "V", "DISO")]
    return sentences, mentions, ontology


class TestStarSubset:
    def test_duplicates_dropped(self):
        sentences, mentions, ontology = star_fixture()
        train, val = corpus.build_star_subset(sentences, mentions, ontology,
                                              split_ratio=0.5, seed=0)
        kept = train.mentions + val.mentions
        assert sorted(m.anchor for m in kept) == ["MS", "griep"]
        # first occurrence of MS is in sentence 0
        assert [m.sentence_id for m in kept if m.anchor == "MS"] == [0]

    def test_unknown_cui_excluded(self):
        sentences, mentions, ontology = star_fixture()
        train, val = corpus.build_star_subset(sentences, mentions, ontology,
                                              split_ratio=0.5, seed=0)
        assert all(m.cui != "C0000999" for m in train.mentions + val.mentions)

    def test_split_deterministic_and_ratio(self):
        rng = np.random.default_rng(3)
        sentences = [corpus.SentenceRecord(i, "P", f"zin {i} nummer", 3)
                     for i in range(10)]
        mentions = [corpus.MentionAnnotation(i, 0, 3, f"m{i:02d}", "T",
                                             "C0000001", "Q1")
                    for i in range(10)]
        ontology = [OntologyRecord(0, "C0000001", "term", "V", "DISO")]
        t1, v1 = corpus.build_star_subset(sentences, mentions, ontology, 0.8, 42)
        t2, v2 = corpus.build_star_subset(sentences, mentions, ontology, 0.8, 42)
        assert len(t1.mentions) == 8 and len(v1.mentions) == 2
        assert t1 == t2 and v1 == v2
        anchors = {m.anchor for m in t1.mentions} | {m.anchor for m in v1.mentions}
        assert len(anchors) == 10  # partition, no overlap or loss

    def test_bad_ratio(self):
        with pytest.raises(ValueError):
            corpus.build_star_subset([], [], [], split_ratio=1.5, seed=0)


class TestCorpusXml:
    def roundtrip(self, sl):
        buf = io.StringIO()
        corpus.serialize_corpus(sl, buf)
        return buf.getvalue(), corpus.parse_corpus(io.StringIO(buf.getvalue()))

    def test_roundtrip_identity(self):
        sentences, mentions, _ = star_fixture()
        sl = corpus.CorpusSlice(sentences=sentences[:1], mentions=mentions[:1])
        text, back = self.roundtrip(sl)
        assert back == sl
        assert "<mention" in text

    def test_roundtrip_escaping(self):
        sl = corpus.CorpusSlice(
            sentences=[corpus.SentenceRecord(0, 'P "q" & <r>', "a < b & c.", 5)],
            mentions=[corpus.MentionAnnotation(0, 0, 5, "a < b", "T&T",
                                               "C0000001", "Q1")])
        _text, back = self.roundtrip(sl)
        assert back == sl

    def test_empty_slice(self):
        text, back = self.roundtrip(corpus.CorpusSlice())
        assert back == corpus.CorpusSlice()
        assert text == "<corpus>\n</corpus>\n"

    def test_serialization_stable_after_normalization(self):
        sentences, mentions, _ = star_fixture()
        sl = corpus.CorpusSlice(sentences=sentences, mentions=mentions[:3])
        once, back = self.roundtrip(sl)
        twice, _ = self.roundtrip(back)
        assert once == twice

    def test_bad_offsets_fatal(self):
        xml = ('<corpus>\n<sentence id="0" page="P">ab'
               '<mention cui="C0000001" qid="Q1" start="9" end="11" target="T">cd'
               "</mention></sentence>\n</corpus>")
        with pytest.raises(DataError, match="sentence 0"):
            corpus.parse_corpus(io.StringIO(xml))
