"""LLM-advised sector clustering and sector-level hedging.

A provider is anything with ``complete(prompt) -> str``. Cluster picks are
made by repeating one prompt several times and majority-voting the parsed
sector names; hedges are requested per selected sector with date-free
prompts. :class:`MockProvider` answers deterministically from the prompt
text so that whole backtests stay reproducible.
"""

from __future__ import annotations

import json
import logging
import os
import re
import statistics
import urllib.request
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from string import Template
from typing import Mapping, Protocol, Sequence

from .errors import ValidationError
from .market_data import SectorMap, SentimentSeries

log = logging.getLogger(__name__)

MIN_CLUSTER_HISTORY = 200
CLUSTER_HISTORY = 252
N_CLUSTERS = 3
ENDPOINT_ENV = "REGRETFOLIO_LLM_ENDPOINT"
API_KEY_ENV = "REGRETFOLIO_LLM_API_KEY"
MODEL_ENV = "REGRETFOLIO_LLM_MODEL"

_SERIES_LINE = re.compile(r"^(\d{4}-\d{2}-\d{2}): (-?\d+(?:\.\d+)?)$", re.M)
_HEDGE_SECTOR = re.compile(r"^Sector to hedge: (.+)$", re.M)


class AdvisorProvider(Protocol):
    def complete(self, prompt: str) -> str: ...


def _template(name: str) -> Template:
    text = resources.files("regretfolio").joinpath("prompts", name).read_text(encoding="utf-8")
    body = "\n".join(line for line in text.splitlines() if not line.startswith("#"))
    return Template(body.strip() + "\n")


def _sector_lines(taxonomy: Sequence[str]) -> str:
    return "\n".join(f"- {s}" for s in taxonomy)


def build_cluster_prompt(s: SentimentSeries, taxonomy: Sequence[str]) -> str:
    if len(s) < MIN_CLUSTER_HISTORY:
        raise ValidationError(
            f"cluster prompt needs {MIN_CLUSTER_HISTORY} days of sentiment, got {len(s)}"
        )
    series = "\n".join(f"{d.isoformat()}: {v:.1f}" for d, v in zip(s.dates, s.values))
    return _template("cluster.txt").substitute(series=series, sectors=_sector_lines(taxonomy))


def build_hedge_prompt(sector: str, taxonomy: Sequence[str]) -> str:
    return _template("hedge.txt").substitute(sector=sector, sectors=_sector_lines(taxonomy))


def parse_sectors(response: str, taxonomy: Sequence[str]) -> list[str]:
    """Taxonomy names found in ``response``, in order of first appearance."""
    if not response or not taxonomy:
        return []
    canon = {name.lower(): name for name in taxonomy}
    # longest names first so "Consumer Staples" wins over "Consumer"
    names = sorted(canon, key=len, reverse=True)
    pattern = re.compile(r"(?<!\w)(" + "|".join(map(re.escape, names)) + r")(?!\w)", re.I)
    out: list[str] = []
    for m in pattern.finditer(response):
        name = canon[m.group(1).lower()]
        if name not in out:
            out.append(name)
    return out


def _ask(provider: AdvisorProvider, prompt: str) -> str | None:
    """One call with a single retry; ``None`` when both attempts fail."""
    for attempt in (1, 2):
        try:
            return provider.complete(prompt)
        except Exception as exc:  # provider failures must never abort a run
            log.warning("advisor call failed (attempt %d): %s", attempt, exc)
    return None


@dataclass(frozen=True)
class ClusterRecommendation:
    sectors: tuple[str, ...]  # empty when fallback is set
    votes: dict[str, int]
    raw_responses: tuple[str | None, ...]
    fallback: bool = False

    def summary(self) -> dict:
        return {"sectors": list(self.sectors), "votes": self.votes, "fallback": self.fallback}


def recommend_clusters(
    provider: AdvisorProvider,
    s: SentimentSeries,
    taxonomy: Sequence[str],
    n_votes: int = 5,
) -> ClusterRecommendation:
    """Majority vote over ``n_votes`` identical prompts.

    Every sector parsed from a response earns one vote. The three most
    voted sectors win, ties going to the earlier taxonomy entry. If fewer than
    three distinct sectors receive votes the result is the flagged
    full-universe fallback.
    """
    prompt = build_cluster_prompt(s, taxonomy)
    responses = tuple(_ask(provider, prompt) for _ in range(n_votes))
    tally: Counter[str] = Counter()
    for text in responses:
        tally.update(parse_sectors(text or "", taxonomy))
    votes = {name: tally[name] for name in taxonomy if tally[name]}
    if len(votes) < N_CLUSTERS:
        log.info("cluster vote inconclusive (%d sectors); using all sectors", len(votes))
        return ClusterRecommendation((), votes, responses, fallback=True)
    order = {name: i for i, name in enumerate(taxonomy)}
    ranked = sorted(votes, key=lambda name: (-votes[name], order[name]))
    return ClusterRecommendation(tuple(ranked[:N_CLUSTERS]), votes, responses)


@dataclass(frozen=True)
class HedgeRecommendation:
    hedges: dict[str, tuple[str, ...]]
    raw_responses: dict[str, str | None] = field(default_factory=dict)
    unhedged: tuple[str, ...] = ()

    def sectors(self) -> set[str]:
        return {h for hs in self.hedges.values() for h in hs}

    def summary(self) -> dict:
        return {"hedges": {k: list(v) for k, v in self.hedges.items()},
                "unhedged": list(self.unhedged)}


def recommend_hedges(
    provider: AdvisorProvider, selected: Sequence[str], taxonomy: Sequence[str]
) -> HedgeRecommendation:
    if not selected:
        raise ValidationError("no sectors selected for hedging")
    chosen = set(selected)
    hedges: dict[str, tuple[str, ...]] = {}
    raw: dict[str, str | None] = {}
    unhedged: list[str] = []
    for sector in selected:
        text = _ask(provider, build_hedge_prompt(sector, taxonomy))
        raw[sector] = text
        picks = tuple(h for h in parse_sectors(text or "", taxonomy) if h not in chosen)
        if picks:
            hedges[sector] = picks
        else:
            unhedged.append(sector)
    return HedgeRecommendation(hedges, raw, tuple(unhedged))


class MockProvider:
    """Deterministic stand-in for a language model.

    Sector-selection prompts are answered with the first three defensive
    sectors (in taxonomy order) when the mean embedded sentiment is below
    ``threshold``, otherwise the first three cyclical ones. Hedge prompts
    are answered from ``hedge_table``, falling back to the first sector of
    the opposite style.
    """

    def __init__(
        self,
        sectors: SectorMap,
        hedge_table: Mapping[str, Sequence[str]] | None = None,
        threshold: float = 40.0,
    ):
        self.taxonomy = tuple(sectors.taxonomy)
        self.styles = dict(sectors.styles)
        self.hedge_table = {k: list(v) for k, v in (hedge_table or {}).items()}
        self.threshold = threshold

    def _of_style(self, style: str) -> list[str]:
        return [s for s in self.taxonomy if self.styles.get(s) == style]

    def complete(self, prompt: str) -> str:
        if "TASK: SECTOR_SELECTION" in prompt:
            values = [float(m.group(2)) for m in _SERIES_LINE.finditer(prompt)]
            if not values:
                return ""
            style = "defensive" if statistics.fmean(values) < self.threshold else "cyclical"
            return ", ".join(self._of_style(style)[:N_CLUSTERS])
        if "TASK: SECTOR_HEDGE" in prompt:
            m = _HEDGE_SECTOR.search(prompt)
            if not m:
                return ""
            sector = m.group(1).strip()
            if sector in self.hedge_table:
                return ", ".join(self.hedge_table[sector])
            own = self.styles.get(sector)
            for other in self.taxonomy:
                if other != sector and self.styles.get(other) not in (None, own):
                    return other
            return ""
        return ""


class HttpProvider:
    """Minimal chat-completions client (OpenAI-compatible JSON)."""

    def __init__(self, endpoint: str, api_key: str | None = None,
                 model: str | None = None, timeout: float = 60.0):
        self.endpoint = endpoint
        self.api_key = api_key
        self.model = model or "default"
        self.timeout = timeout

    def complete(self, prompt: str) -> str:
        body = json.dumps({
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
        }).encode("utf-8")
        req = urllib.request.Request(self.endpoint, data=body, method="POST",
                                     headers={"Content-Type": "application/json"})
        if self.api_key:
            req.add_header("Authorization", f"Bearer {self.api_key}")
        with urllib.request.urlopen(req, timeout=self.timeout) as resp:
            payload = json.loads(resp.read().decode("utf-8"))
        return payload["choices"][0]["message"]["content"]


def provider_from_env(
    sectors: SectorMap, hedge_table: Mapping[str, Sequence[str]] | None = None
) -> AdvisorProvider:
    endpoint = os.environ.get(ENDPOINT_ENV)
    if endpoint:
        return HttpProvider(endpoint, os.environ.get(API_KEY_ENV), os.environ.get(MODEL_ENV))
    return MockProvider(sectors, hedge_table)
