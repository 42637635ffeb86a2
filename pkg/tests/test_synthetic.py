"""Tests for the planted-position corpus generator."""

import numpy as np
import pytest

from polyscale.corpus import Polarity, compute_rile
from polyscale.synthetic import make_planted_corpus


@pytest.fixture(scope="module")
def planted():
    return make_planted_corpus(seed=21)


class TestShape:
    def test_document_count(self, planted):
        assert len(planted.corpus) == 3 * 4 * 4

    def test_custom_sizes(self):
        pc = make_planted_corpus(seed=1, n_countries=2, parties_per_country=3,
                                 n_elections=2)
        assert len(pc.corpus) == 2 * 3 * 2
        assert sorted({m.country for m in pc.corpus}) == ["AA", "BB"]

    def test_languages_follow_countries(self, planted):
        for m in planted.corpus:
            assert m.language == m.country.lower()

    def test_elections_straddle_2009(self, planted):
        years = {m.election_date.year for m in planted.corpus}
        assert years == {2002, 2006, 2010, 2014}

    def test_annotated_fraction(self, planted):
        n = sum(m.fully_annotated for m in planted.corpus)
        assert n == round(0.3 * len(planted.corpus))

    def test_unannotated_docs_have_no_gold_codes(self, planted):
        for m in planted.corpus:
            if not m.fully_annotated:
                assert all(s.gold_code is None for s in m.sentences)


class TestPlantedSignal:
    def test_positions_live_in_blocks(self, planted):
        for party, theta in planted.planted_positions.items():
            index = int(party.split("-P")[1])
            if index <= 2:
                assert -0.9 <= theta <= -0.1
            else:
                assert 0.1 <= theta <= 0.9

    def test_ches_gold_echoes_theta(self, planted):
        for m in planted.corpus:
            assert m.ches_gold == planted.planted_positions[m.party_id]

    def test_rile_gold_matches_annotated_codes(self, planted):
        checked = 0
        for m in planted.corpus:
            if m.fully_annotated:
                codes = [s.gold_code for s in m.sentences]
                assert m.rile_gold == compute_rile(codes, planted.scheme)
                checked += 1
        assert checked > 0

    def test_rile_correlates_with_theta(self, planted):
        theta = [planted.planted_positions[m.party_id] for m in planted.corpus]
        rile = [m.rile_gold for m in planted.corpus]
        assert np.corrcoef(theta, rile)[0, 1] > 0.4

    def test_class_tokens_name_the_code(self, planted):
        for m in planted.corpus:
            if not m.fully_annotated:
                continue
            for s in m.sentences:
                prefix = f"{m.language}{s.gold_code}t"
                assert any(t.startswith(prefix) for t in s.tokens)

    def test_directional_codes_follow_theta_sign(self, planted):
        # strongly right parties should emit more right than left codes
        scheme = planted.scheme
        for m in planted.corpus:
            theta = planted.planted_positions[m.party_id]
            if not m.fully_annotated or abs(theta) < 0.6:
                continue
            pols = [scheme.polarity_of(s.gold_code) for s in m.sentences]
            n_left = sum(p is Polarity.LEFT for p in pols)
            n_right = sum(p is Polarity.RIGHT for p in pols)
            if n_left + n_right >= 4:
                if theta > 0:
                    assert n_right >= n_left
                else:
                    assert n_left >= n_right


class TestGraph:
    def test_regional_pairs_stay_within_country_blocks(self, planted):
        for (a, b), count in planted.party_graph.regional.items():
            assert a.split("-")[0] == b.split("-")[0]
            assert 2 <= count <= 5

    def test_eu_pairs_cross_countries_within_blocks(self, planted):
        def block(party):
            return 0 if int(party.split("-P")[1]) <= 2 else 1

        assert planted.party_graph.eu
        for (a, b), count in planted.party_graph.eu.items():
            assert a.split("-")[0] != b.split("-")[0]
            assert block(a) == block(b)
            assert 1 <= count <= 3

    def test_no_cross_block_edges(self, planted):
        def block(party):
            return 0 if int(party.split("-P")[1]) <= 2 else 1

        for table in (planted.party_graph.regional, planted.party_graph.eu):
            for a, b in table:
                assert block(a) == block(b)


class TestDeterminism:
    def test_same_seed_is_identical(self):
        a = make_planted_corpus(seed=5, n_elections=2)
        b = make_planted_corpus(seed=5, n_elections=2)
        assert a.corpus == b.corpus
        assert a.party_graph == b.party_graph
        assert a.planted_positions == b.planted_positions

    def test_different_seed_differs(self):
        a = make_planted_corpus(seed=5, n_elections=2)
        b = make_planted_corpus(seed=6, n_elections=2)
        assert a.planted_positions != b.planted_positions


class TestValidation:
    def test_too_few_parties_rejected(self):
        with pytest.raises(ValueError, match="parties"):
            make_planted_corpus(parties_per_country=1)

    def test_bad_fraction_rejected(self):
        with pytest.raises(ValueError, match="annotated_fraction"):
            make_planted_corpus(annotated_fraction=1.5)

    def test_bad_sentence_range_rejected(self):
        with pytest.raises(ValueError, match="sentences_per_doc"):
            make_planted_corpus(sentences_per_doc=(5, 3))

    def test_bad_country_count_rejected(self):
        with pytest.raises(ValueError, match="n_countries"):
            make_planted_corpus(n_countries=0)
