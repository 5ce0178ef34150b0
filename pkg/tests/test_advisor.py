import re
from datetime import date

import numpy as np
import pytest

from regretfolio import advisor as adv
from regretfolio.errors import ValidationError
from regretfolio.market_data import SectorMap, SentimentSeries

from conftest import make_dates

TAXONOMY = ("Technology", "Energy", "Utilities", "Healthcare", "Consumer Staples", "Financials")
STYLES = {"Technology": "cyclical", "Energy": "cyclical", "Financials": "cyclical",
          "Utilities": "defensive", "Healthcare": "defensive", "Consumer Staples": "defensive"}
SECTORS = SectorMap({f"T{i}": s for i, s in enumerate(TAXONOMY)}, TAXONOMY, STYLES)


def sentiment(level, n=252):
    return SentimentSeries(make_dates(n), np.full(n, float(level)))


class Scripted:
    def __init__(self, responses):
        self.responses = list(responses)
        self.prompts = []

    def complete(self, prompt):
        self.prompts.append(prompt)
        item = self.responses.pop(0)
        if isinstance(item, Exception):
            raise item
        return item


def test_cluster_prompt_deterministic_and_complete():
    tax = tuple(f"Sector{i:02d}" for i in range(20))
    s = sentiment(55)
    p1 = adv.build_cluster_prompt(s, tax)
    assert p1 == adv.build_cluster_prompt(s, tax)
    assert all(name in p1 for name in tax)
    assert s.dates[0].isoformat() in p1


def test_cluster_prompt_short_history():
    with pytest.raises(ValidationError):
        adv.build_cluster_prompt(sentiment(50, 100), TAXONOMY)


def test_hedge_prompt_has_no_dates():
    p = adv.build_hedge_prompt("Energy", TAXONOMY)
    assert "Energy" in p
    assert not re.search(r"\d{4}-\d{2}-\d{2}", p)
    assert not re.search(r"\b(19|20)\d{2}\b", p)


def test_parse_sectors():
    assert adv.parse_sectors("Energy, Utilities, Healthcare", TAXONOMY) == [
        "Energy", "Utilities", "Healthcare"]
    text = "I would pick consumer staples first. Technology also looks fine; avoid others."
    assert adv.parse_sectors(text, TAXONOMY) == ["Consumer Staples", "Technology"]
    assert adv.parse_sectors("qwzx blorp", TAXONOMY) == []


def test_unanimous_vote():
    provider = Scripted(["Energy, Utilities, Healthcare"] * 5)
    rec = adv.recommend_clusters(provider, sentiment(50), TAXONOMY)
    assert rec.sectors == ("Energy", "Utilities", "Healthcare")
    assert rec.votes == {"Energy": 5, "Utilities": 5, "Healthcare": 5}
    assert not rec.fallback


@pytest.mark.parametrize("taxonomy,third", [(("A", "B", "C", "D"), "C"),
                                            (("A", "B", "D", "C"), "D")])
def test_vote_tie_break(taxonomy, third):
    provider = Scripted(["A, B, C, D"] * 3 + ["A, B"] * 2)
    rec = adv.recommend_clusters(provider, sentiment(50), taxonomy)
    assert rec.votes == {"A": 5, "B": 5, "C": 3, "D": 3}
    assert rec.sectors == ("A", "B", third)


def test_unparseable_votes_fall_back():
    rec = adv.recommend_clusters(Scripted(["no idea"] * 5), sentiment(50), TAXONOMY)
    assert rec.fallback and rec.sectors == ()


def test_failure_is_retried_once():
    provider = Scripted([RuntimeError("down"), "Energy, Utilities, Healthcare"] + ["Energy"] * 4)
    rec = adv.recommend_clusters(provider, sentiment(50), TAXONOMY)
    assert rec.votes["Energy"] == 5
    assert rec.votes["Utilities"] == 1


def test_hedges_from_mock_table():
    mock = adv.MockProvider(SECTORS, {"Technology": ["Utilities"]})
    rec = adv.recommend_hedges(mock, ["Technology"], TAXONOMY)
    assert rec.hedges == {"Technology": ("Utilities",)}


def test_self_and_selected_hedges_dropped():
    provider = Scripted(["Energy, Utilities", "Energy"])
    rec = adv.recommend_hedges(provider, ["Energy", "Technology"], TAXONOMY)
    assert rec.hedges == {"Energy": ("Utilities",)}
    assert rec.unhedged == ("Technology",)


def test_hedge_provider_failure_degrades():
    provider = Scripted([RuntimeError("x"), RuntimeError("y")])
    rec = adv.recommend_hedges(provider, ["Energy"], TAXONOMY)
    assert rec.hedges == {}
    assert rec.unhedged == ("Energy",)


def test_mock_rules():
    mock = adv.MockProvider(SECTORS)
    low = adv.build_cluster_prompt(sentiment(30), TAXONOMY)
    high = adv.build_cluster_prompt(sentiment(60), TAXONOMY)
    assert adv.parse_sectors(mock.complete(low), TAXONOMY) == [
        "Utilities", "Healthcare", "Consumer Staples"]
    assert adv.parse_sectors(mock.complete(high), TAXONOMY) == [
        "Technology", "Energy", "Financials"]
    assert mock.complete(low) == mock.complete(low)
    rec = adv.recommend_clusters(mock, sentiment(30), TAXONOMY)
    assert rec.votes == {"Utilities": 5, "Healthcare": 5, "Consumer Staples": 5}


def test_mock_default_hedge_opposite_style():
    mock = adv.MockProvider(SECTORS)
    rec = adv.recommend_hedges(mock, ["Energy"], TAXONOMY)
    assert STYLES[rec.hedges["Energy"][0]] == "defensive"


def test_provider_from_env(monkeypatch):
    monkeypatch.delenv(adv.ENDPOINT_ENV, raising=False)
    assert isinstance(adv.provider_from_env(SECTORS), adv.MockProvider)
    monkeypatch.setenv(adv.ENDPOINT_ENV, "http://localhost:1/v1")
    assert isinstance(adv.provider_from_env(SECTORS), adv.HttpProvider)
