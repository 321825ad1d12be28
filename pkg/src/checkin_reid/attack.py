"""Smoothed multinomial user models and maximum-a-posteriori identification.

Each user ``v`` is modelled as a multinomial over the ``L`` venues of the
dataset with additive smoothing::

    P(venue i | v) = (N_i + alpha) / (N + alpha * L)

where ``N_i`` counts the training check-ins of ``v`` at venue ``i`` and
``N`` their total.  An anonymous set of check-ins is attributed to the user
with the highest posterior; with a uniform prior this is the user with the
highest log-likelihood.  All scoring happens in natural-log space.

Scores within :data:`TIE_TOL` nats of the maximum count as tied, and ties go
to the lexicographically smallest user id.  The tolerance only absorbs
floating-point rounding between mathematically equal posteriors (e.g.
``log 2 - log 8`` against ``log 3 - log 12``); genuinely different
posteriors differ by far more.
"""

from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from typing import IO, Iterable, Mapping, Sequence

import numpy as np
from scipy import sparse

from .ingest import CheckIn

TIE_TOL = 1e-9


def _venue(c) -> str:
    return c.venue_id if isinstance(c, CheckIn) else c


@dataclass(frozen=True)
class UserModel:
    user_id: str
    counts: Mapping[str, int]
    total: int
    alpha: float
    vocab_size: int
    vocabulary: frozenset | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"smoothing parameter alpha must be > 0, got {self.alpha!r}")
        if self.vocab_size < max(1, len(self.counts)):
            raise ValueError("vocab_size smaller than the number of venues with counts")
        if self.total != sum(self.counts.values()):
            raise ValueError("total does not match the sum of counts")

    @property
    def denominator(self) -> float:
        return self.total + self.alpha * self.vocab_size

    def prob(self, venue_id: str) -> float:
        return (self.counts.get(venue_id, 0) + self.alpha) / self.denominator

    def log_prob(self, venue_id: str) -> float:
        return math.log(self.counts.get(venue_id, 0) + self.alpha) - math.log(self.denominator)

    def total_mass(self) -> float:
        """Probability summed over the whole vocabulary (1 up to rounding)."""
        unseen = self.vocab_size - len(self.counts)
        seen = math.fsum(n + self.alpha for n in self.counts.values())
        return (seen + unseen * self.alpha) / self.denominator


def build_user_model(
    train: Iterable,
    alpha: float,
    vocab_size: int,
    *,
    user_id: str | None = None,
    vocabulary: Iterable[str] | None = None,
) -> UserModel:
    """Fit one user's smoothed multinomial from training check-ins.

    ``train`` holds :class:`CheckIn` records or bare venue ids and may be
    empty, which yields the uniform model.
    """
    train = list(train)
    if user_id is None:
        user_id = train[0].user_id if train and isinstance(train[0], CheckIn) else ""
    counts = Counter(_venue(c) for c in train)
    vocab = frozenset(vocabulary) if vocabulary is not None else None
    if vocab is not None:
        missing = set(counts) - vocab
        if missing:
            raise ValueError(f"training venues outside the vocabulary: {sorted(missing)[:5]}")
    return UserModel(user_id, dict(sorted(counts.items())), len(train), float(alpha), int(vocab_size), vocab)


def log_likelihood(model: UserModel, test: Sequence) -> float:
    """Sum of ``ln P(c | v)`` over the test check-ins."""
    if not test:
        raise ValueError("test set is empty")
    ll = 0.0
    for c in test:
        v = _venue(c)
        if model.vocabulary is not None and v not in model.vocabulary:
            raise ValueError(f"test venue {v!r} is not in the vocabulary")
        ll += model.log_prob(v)
    return ll


class ModelBank:
    """The user models of one attack, stored as a sparse count matrix.

    Users and venues are kept in sorted order; row order is therefore the
    tie-break order.  The prior over users is uniform.
    """

    def __init__(self, user_ids: Sequence[str], venue_ids: Sequence[str], counts, alpha: float):
        if not alpha > 0:
            raise ValueError(f"smoothing parameter alpha must be > 0, got {alpha!r}")
        if not user_ids:
            raise ValueError("a model bank needs at least one user")
        if not venue_ids:
            raise ValueError("a model bank needs a non-empty vocabulary")
        self.user_ids = tuple(user_ids)
        if list(self.user_ids) != sorted(set(self.user_ids)):
            raise ValueError("user ids must be unique and sorted (row order is the tie-break order)")
        self.venue_ids = tuple(venue_ids)
        self.venue_index = {v: i for i, v in enumerate(self.venue_ids)}
        self.alpha = float(alpha)
        self.vocab_size = len(self.venue_ids)
        self.counts = sparse.csc_matrix(counts, dtype=np.int64)
        self.totals = np.asarray(self.counts.sum(axis=1)).ravel().astype(np.int64)
        self.log_norm = np.log(self.totals + self.alpha * self.vocab_size)
        max_count = int(self.counts.max()) if self.counts.nnz else 0
        self.log_table = np.log(np.arange(max_count + 1, dtype=np.float64) + self.alpha)

    @classmethod
    def from_indices(cls, user_ids, venue_ids, train_indices: Sequence[np.ndarray], alpha: float) -> "ModelBank":
        """``train_indices[k]`` lists venue indices of user ``k``'s training check-ins."""
        empty = [np.zeros(0, dtype=np.int64)]
        rows = np.concatenate([np.full(len(t), k, dtype=np.int64) for k, t in enumerate(train_indices)] or empty)
        cols = np.concatenate([np.asarray(t, dtype=np.int64) for t in train_indices] or empty)
        data = np.ones(len(rows), dtype=np.int64)
        m = sparse.csr_matrix((data, (rows, cols)), shape=(len(user_ids), len(venue_ids)))
        m.sum_duplicates()
        return cls(user_ids, venue_ids, m, alpha)

    @classmethod
    def build(cls, train: Mapping[str, Iterable], venue_ids: Iterable[str], alpha: float) -> "ModelBank":
        """Bank from per-user training check-ins (or venue ids) over ``venue_ids``."""
        venues = tuple(sorted(set(venue_ids)))
        index = {v: i for i, v in enumerate(venues)}
        users = tuple(sorted(train))
        idx = []
        for u in users:
            try:
                idx.append(np.array([index[_venue(c)] for c in train[u]], dtype=np.int64))
            except KeyError as e:
                raise ValueError(f"training venue {e.args[0]!r} is not in the vocabulary") from None
        return cls.from_indices(users, venues, idx, alpha)

    @classmethod
    def from_models(cls, models: Iterable[UserModel], venue_ids: Iterable[str]) -> "ModelBank":
        models = sorted(models, key=lambda m: m.user_id)
        alphas = {m.alpha for m in models}
        venues = tuple(sorted(set(venue_ids)))
        if len(alphas) != 1 or any(m.vocab_size != len(venues) for m in models):
            raise ValueError("all models must share alpha and vocab_size")
        train = {m.user_id: [v for v, n in m.counts.items() for _ in range(n)] for m in models}
        return cls.build(train, venues, alphas.pop())

    def __len__(self) -> int:
        return len(self.user_ids)

    @cached_property
    def models(self) -> dict[str, UserModel]:
        csr = self.counts.tocsr()
        vocab = frozenset(self.venue_ids)
        out = {}
        for k, u in enumerate(self.user_ids):
            lo, hi = csr.indptr[k], csr.indptr[k + 1]
            counts = {self.venue_ids[j]: int(n) for j, n in zip(csr.indices[lo:hi], csr.data[lo:hi])}
            counts = dict(sorted(counts.items()))
            out[u] = UserModel(u, counts, int(self.totals[k]), self.alpha, self.vocab_size, vocab)
        return out

    def indices(self, test: Iterable) -> np.ndarray:
        try:
            return np.array([self.venue_index[_venue(c)] for c in test], dtype=np.int64)
        except KeyError as e:
            raise ValueError(f"test venue {e.args[0]!r} is not in the vocabulary") from None

    def prefix_scores(self, pools: np.ndarray) -> np.ndarray:
        """Cumulative log-likelihoods of test prefixes.

        ``pools`` is a ``(T, m)`` array of venue indices; the result has shape
        ``(users, T, m)`` and entry ``[u, t, j]`` is the log-likelihood of the
        first ``j + 1`` check-ins of test ``t`` under user ``u``.
        """
        pools = np.asarray(pools, dtype=np.int64)
        cols, inv = np.unique(pools.ravel(), return_inverse=True)
        sub = self.counts[:, cols].toarray()
        logp = self.log_table[sub] - self.log_norm[:, None]
        return np.cumsum(logp[:, inv.reshape(pools.shape)], axis=2)


def pick_winner(scores: np.ndarray, axis: int = 0) -> np.ndarray:
    """Index of the best score along ``axis``; near-ties go to the lowest index."""
    best = scores.max(axis=axis, keepdims=True)
    return np.argmax(scores >= best - TIE_TOL, axis=axis)


def identify(bank: ModelBank, test: Sequence, prior: Mapping[str, float] | None = None):
    """Attribute ``test`` to the user with the highest posterior.

    Returns ``(user_id, scores)`` where ``scores`` maps every user to its
    unnormalised log-posterior ``ln P(v) + sum ln P(c | v)``.  ``prior``
    defaults to uniform; any positive weights are accepted.
    """
    if len(bank) == 0:
        raise ValueError("empty model bank")
    if not len(test):
        raise ValueError("test set is empty")
    idx = bank.indices(test)
    ll = bank.prefix_scores(idx[None, :])[:, 0, -1]
    if prior is None:
        log_prior = np.full(len(bank), -math.log(len(bank)))
    else:
        weights = np.array([prior[u] for u in bank.user_ids], dtype=np.float64)
        if np.any(weights <= 0):
            raise ValueError("prior weights must be positive")
        log_prior = np.log(weights)
    scores = ll + log_prior
    winner = int(pick_winner(scores))
    return bank.user_ids[winner], dict(zip(bank.user_ids, scores.tolist()))


# -- export ----------------------------------------------------------------


def write_bank(bank: ModelBank, stream: IO[str]) -> None:
    """Debug export: ``#key,value`` header lines, then ``user_id,venue_id,count`` rows."""
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(("#alpha", repr(bank.alpha)))
    w.writerow(("#vocab_size", bank.vocab_size))
    for v in bank.venue_ids:
        w.writerow(("#venue", v))
    for u in bank.user_ids:
        w.writerow(("#user", u))
    w.writerow(("user_id", "venue_id", "count"))
    for u, model in bank.models.items():
        for v, n in model.counts.items():
            w.writerow((u, v, n))


def read_bank(stream: IO[str]) -> ModelBank:
    alpha = None
    vocab_size = None
    venues, users = [], []
    train: dict[str, list[str]] = {}
    in_rows = False
    for row in csv.reader(stream):
        if not row:
            continue
        if not in_rows:
            key = row[0]
            if key == "#alpha":
                alpha = float(row[1])
            elif key == "#vocab_size":
                vocab_size = int(row[1])
            elif key == "#venue":
                venues.append(row[1])
            elif key == "#user":
                users.append(row[1])
                train[row[1]] = []
            elif row == ["user_id", "venue_id", "count"]:
                in_rows = True
            else:
                raise ValueError(f"unexpected header line {row!r}")
            continue
        u, v, n = row
        train[u].extend([v] * int(n))
    if alpha is None or vocab_size != len(venues):
        raise ValueError("bank header is incomplete or inconsistent")
    return ModelBank.build(train, venues, alpha)
