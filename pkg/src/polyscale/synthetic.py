"""Synthetic corpora with planted party positions.

The generator plants a latent position theta in [-1, 1] for every party and
derives everything observable from it: sentence codes are drawn with
right-leaning probability (1 + theta) / 2 whenever a sentence is
directional, document scores are computed exactly from the drawn codes,
and expert scores echo theta.  Each sentence spells out its code through
dedicated surface tokens, so a word-level model can recover the planted
structure.  Coalition counts connect parties within ideological blocks,
which gives the relational calibration rules real signal to exploit.

Everything is driven by one seed, so fixtures are reproducible bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import date

import numpy as np

from .calibration import PartyGraph
from .corpus import Corpus, LabelScheme, Manifesto, Polarity, Sentence, compute_rile


@dataclass(frozen=True)
class PlantedCorpus:
    corpus: Corpus
    party_graph: PartyGraph
    planted_positions: dict
    scheme: LabelScheme


def make_planted_corpus(
    seed: int = 0,
    n_countries: int = 3,
    parties_per_country: int = 4,
    n_elections: int = 4,
    n_languages: int = 3,
    annotated_fraction: float = 0.3,
    politicization: float = 0.55,
    sentences_per_doc: tuple[int, int] = (4, 9),
    class_tokens: int = 3,
    filler_tokens: int = 12,
) -> PlantedCorpus:
    """Build a corpus of n_countries * parties_per_country * n_elections
    documents with planted positions.

    Elections run every four years from 2002, so the default straddles a
    2009 temporal cutoff.  Countries cycle through ``n_languages``
    pseudo-languages (several countries may share one, as in real corpora).
    Parties split into a left and a right block per country; regional
    coalition counts connect parties within a block and European ones
    connect the same block across countries.  ``annotated_fraction`` of the
    documents keep their sentence codes as gold labels; every document
    carries an exact gold score computed from the drawn codes, plus the
    party's theta as its expert score.
    """
    if n_countries < 1 or n_countries > 26:
        raise ValueError("n_countries must be between 1 and 26")
    if n_languages < 1 or n_languages > 26:
        raise ValueError("n_languages must be between 1 and 26")
    if parties_per_country < 2:
        raise ValueError("need at least 2 parties per country to form blocks")
    if n_elections < 1:
        raise ValueError("need at least one election")
    if not 0.0 <= annotated_fraction <= 1.0:
        raise ValueError("annotated_fraction must be in [0, 1]")
    if not 0.0 <= politicization <= 1.0:
        raise ValueError("politicization must be in [0, 1]")
    lo, hi = sentences_per_doc
    if lo < 1 or hi < lo:
        raise ValueError("sentences_per_doc must be a nondecreasing pair >= 1")

    rng = np.random.default_rng(seed)
    scheme = LabelScheme.default()
    left_codes = [c for c in scheme.codes if scheme.polarities[c] is Polarity.LEFT]
    right_codes = [c for c in scheme.codes if scheme.polarities[c] is Polarity.RIGHT]
    neutral_codes = [c for c in scheme.codes if scheme.polarities[c] is Polarity.NEUTRAL]

    countries = [chr(ord("A") + i) * 2 for i in range(n_countries)]
    lang_names = [chr(ord("a") + i) * 2 for i in range(n_languages)]
    languages = {c: lang_names[i % n_languages] for i, c in enumerate(countries)}
    years = [2002 + 4 * k for k in range(n_elections)]

    positions: dict[str, float] = {}
    blocks: dict[str, int] = {}
    for country in countries:
        for j in range(parties_per_country):
            party = f"{country}-P{j + 1}"
            block = 0 if j < parties_per_country // 2 else 1
            blocks[party] = block
            low, high = (-0.9, -0.1) if block == 0 else (0.1, 0.9)
            positions[party] = float(rng.uniform(low, high))

    def draw_sentence(lang: str, theta: float, index: int) -> tuple[str, Sentence]:
        if rng.random() < politicization:
            side = right_codes if rng.random() < (1.0 + theta) / 2.0 else left_codes
            code = side[int(rng.integers(len(side)))]
        else:
            code = neutral_codes[int(rng.integers(len(neutral_codes)))]
        n_class = int(rng.integers(2, 5))
        n_fill = int(rng.integers(1, 4))
        tokens = [
            f"{lang}{code}t{rng.integers(class_tokens)}" for _ in range(n_class)
        ] + [f"{lang}fill{rng.integers(filler_tokens)}" for _ in range(n_fill)]
        tokens = [tokens[i] for i in rng.permutation(len(tokens))]
        return code, Sentence(
            text=" ".join(tokens),
            tokens=tuple(tokens),
            position_index=index,
            gold_code=code,
        )

    drafts = []
    for ci, country in enumerate(countries):
        lang = languages[country]
        for year in years:
            election = date(year, 3 + 3 * (ci % 3), 15)
            for j in range(parties_per_country):
                party = f"{country}-P{j + 1}"
                theta = positions[party]
                n_sent = int(rng.integers(lo, hi + 1))
                codes, sentences = [], []
                for s in range(n_sent):
                    code, sentence = draw_sentence(lang, theta, s + 1)
                    codes.append(code)
                    sentences.append(sentence)
                drafts.append((party, country, lang, election, codes, sentences))

    n_annotated = round(annotated_fraction * len(drafts))
    annotated = set(rng.permutation(len(drafts))[:n_annotated].tolist())
    manifestos = []
    for i, (party, country, lang, election, codes, sentences) in enumerate(drafts):
        if i not in annotated:
            sentences = [
                Sentence(s.text, s.tokens, s.position_index, None) for s in sentences
            ]
        manifestos.append(
            Manifesto(
                id=f"{party}-{election.year}",
                party_id=party,
                country=country,
                language=lang,
                election_date=election,
                sentences=tuple(sentences),
                rile_gold=compute_rile(codes, scheme),
                ches_gold=positions[party],
            )
        )

    pairs = []
    parties = sorted(positions)
    for a_i, a in enumerate(parties):
        for b in parties[a_i + 1 :]:
            if blocks[a] != blocks[b]:
                continue
            same_country = a.split("-")[0] == b.split("-")[0]
            if same_country:
                pairs.append((a, b, int(rng.integers(2, 6)), "REGIONAL"))
            else:
                pairs.append((a, b, int(rng.integers(1, 4)), "EU"))

    return PlantedCorpus(
        corpus=Corpus(manifestos=tuple(manifestos), scheme=scheme),
        party_graph=PartyGraph.from_pairs(pairs),
        planted_positions=positions,
        scheme=scheme,
    )
