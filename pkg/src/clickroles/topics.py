"""Topic modeling over article texts.

Latent Dirichlet allocation fit by collapsed Gibbs sampling: the model
keeps one topic assignment per token instance and resamples each from
the full conditional

    p(z = k) ∝ (n_dk + alpha) * (n_kw + beta) / (n_k + V*beta)

with all counts excluding the token being resampled. phi and theta are
point estimates from the final counts with Dirichlet smoothing. The
sampler is sequential by design; all randomness comes from one seeded
generator, so a run is reproducible bit for bit.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Collection, Iterable, Iterator, Sequence

import numpy as np

from .errors import DataError, UsageError
from .features import TOPIC_ASSIGNMENT_COLUMNS
from .tableio import iter_lines, open_text, write_matrix_csv, write_tsv

# minimal English function-word list; callers with real corpora should
# supply their own via the stop word file
DEFAULT_STOP_WORDS = frozenset(
    """a about above after again all also an and any are as at be because been
    before being below between both but by can did do does doing down during
    each few for from further had has have having he her here hers him his how
    i if in into is it its itself just me more most my no nor not now of off
    on once only or other our out over own same she so some such than that the
    their them then there these they this those through to too under until up
    very was we were what when where which while who whom why will with you
    your""".split()
)

# human labels assigned to one historical 20-topic fit on the full
# corpus; topic identity depends on the fit, so treat these as display
# defaults for k=20 runs, not as ground truth
DEFAULT_TOPIC_LABELS = (
    "Technology, Stubs",
    "Architecture",
    "Sports",
    "Politics",
    "TV&Movies",
    "Fine Arts&Culture",
    "Biology",
    "Music",
    "Research&Education",
    "Media/Economics",
    "Military",
    "Industry&Chemistry",
    "North America",
    "Space&Racing",
    "Europe",
    "Asia",
    "Latin America&Iberia",
    "UK&Commonwealth",
    "Eastern Europe&Russia",
    "Awards&Celebrities",
)

_WORD_RE = re.compile(r"\w+")


def tokenize(text: str, stop_words: Collection[str] = DEFAULT_STOP_WORDS) -> list[str]:
    """Lowercased alphabetic tokens, stop words and single letters removed."""
    return [
        t
        for t in _WORD_RE.findall(text.lower())
        if len(t) >= 2 and t.isalpha() and t not in stop_words
    ]


@dataclass(frozen=True)
class Corpus:
    articles: tuple[str, ...]
    vocabulary: tuple[str, ...]
    # per document: (token id, count), sorted by token id
    documents: tuple[tuple[tuple[int, int], ...], ...]
    empty_articles: tuple[str, ...]

    @property
    def total_tokens(self) -> int:
        return sum(c for doc in self.documents for _, c in doc)


def parse_documents(lines: Iterable[str]) -> Iterator[tuple[str, str]]:
    """Split "article<TAB>text" lines; blank lines are skipped."""
    for lineno, line in enumerate(lines, start=1):
        if not line:
            continue
        article, sep, text = line.partition("\t")
        if not sep or not article:
            raise DataError(f"line {lineno}: expected article<TAB>text")
        yield article, text


def build_corpus(
    texts: Iterable[tuple[str, str]],
    stop_words: Collection[str] = DEFAULT_STOP_WORDS,
) -> Corpus:
    """Bag-of-words corpus with a first-appearance vocabulary order.

    Documents that tokenize to nothing are kept (zero-length) and
    flagged in `empty_articles`.
    """
    articles: list[str] = []
    vocab: list[str] = []
    token_ids: dict[str, int] = {}
    documents: list[tuple[tuple[int, int], ...]] = []
    empty: list[str] = []
    seen: set[str] = set()

    for article, text in texts:
        if article in seen:
            raise DataError(f"duplicate article in corpus: {article!r}")
        seen.add(article)
        counts: dict[int, int] = {}
        for token in tokenize(text, stop_words):
            tid = token_ids.get(token)
            if tid is None:
                tid = token_ids[token] = len(vocab)
                vocab.append(token)
            counts[tid] = counts.get(tid, 0) + 1
        articles.append(article)
        documents.append(tuple(sorted(counts.items())))
        if not counts:
            empty.append(article)

    if not articles:
        raise DataError("empty corpus")
    return Corpus(tuple(articles), tuple(vocab), tuple(documents), tuple(empty))


def corpus_from_file(path: str | Path, stop_words: Collection[str] = DEFAULT_STOP_WORDS) -> Corpus:
    return build_corpus(parse_documents(iter_lines(path)), stop_words)


def read_stop_words(path: str | Path) -> frozenset[str]:
    return frozenset(w.strip().lower() for w in iter_lines(path) if w.strip())


@dataclass(frozen=True)
class TopicModel:
    k: int
    alpha: float
    beta: float
    iterations: int
    seed: int
    articles: tuple[str, ...]
    vocabulary: tuple[str, ...]
    phi: np.ndarray  # k x V, rows sum to 1
    theta: np.ndarray  # D x k, rows sum to 1


IterationHook = Callable[[int, list[list[int]], list[list[int]]], None]


def fit_lda(
    corpus: Corpus,
    k: int = 20,
    alpha: float | None = None,
    beta: float = 0.01,
    iterations: int = 1000,
    seed: int = 0,
    on_iteration: IterationHook | None = None,
) -> TopicModel:
    """Collapsed Gibbs fit; deterministic for a given seed.

    alpha defaults to 50/k. `on_iteration(i, topic_word, doc_topic)` is
    called after each sweep with the live count matrices (read-only use).
    """
    if k < 2:
        raise UsageError(f"k must be at least 2, got {k}")
    if iterations < 1:
        raise UsageError(f"iterations must be positive, got {iterations}")
    v = len(corpus.vocabulary)
    if k > v:
        raise DataError(f"k={k} exceeds vocabulary size {v}")
    if alpha is None:
        alpha = 50.0 / k

    # flatten to token instances; the count matrices live as plain lists
    # (the sweep is a tight scalar loop)
    docs: list[list[int]] = [
        [tid for tid, cnt in doc for _ in range(cnt)] for doc in corpus.documents
    ]
    d_count = len(docs)
    total = sum(len(doc) for doc in docs)
    if total == 0:
        raise DataError("corpus has no tokens after stop word removal")

    rng = np.random.default_rng(seed)
    n_dk = [[0] * k for _ in range(d_count)]
    n_kw = [[0] * v for _ in range(k)]
    n_k = [0] * k
    z: list[list[int]] = []

    init_u = rng.random(total).tolist()
    pos = 0
    for d, doc in enumerate(docs):
        zd = []
        nd = n_dk[d]
        for w in doc:
            t = min(int(init_u[pos] * k), k - 1)
            pos += 1
            zd.append(t)
            nd[t] += 1
            n_kw[t][w] += 1
            n_k[t] += 1
        z.append(zd)

    vbeta = v * beta
    for it in range(iterations):
        u_iter = rng.random(total).tolist()
        pos = 0
        for d, doc in enumerate(docs):
            nd = n_dk[d]
            zd = z[d]
            for i, w in enumerate(doc):
                t = zd[i]
                nd[t] -= 1
                n_kw[t][w] -= 1
                n_k[t] -= 1

                total_weight = 0.0
                weights = []
                for kk in range(k):
                    wgt = (nd[kk] + alpha) * (n_kw[kk][w] + beta) / (n_k[kk] + vbeta)
                    total_weight += wgt
                    weights.append(total_weight)
                r = u_iter[pos] * total_weight
                pos += 1
                t = 0
                while weights[t] < r:
                    t += 1

                zd[i] = t
                nd[t] += 1
                n_kw[t][w] += 1
                n_k[t] += 1
        if on_iteration is not None:
            on_iteration(it, n_kw, n_dk)

    phi = (np.asarray(n_kw, dtype=float) + beta) / (
        np.asarray(n_k, dtype=float)[:, None] + vbeta
    )
    doc_len = np.asarray([len(doc) for doc in docs], dtype=float)
    theta = (np.asarray(n_dk, dtype=float) + alpha) / (doc_len[:, None] + k * alpha)
    return TopicModel(
        k, alpha, beta, iterations, seed, corpus.articles, corpus.vocabulary, phi, theta
    )


def dominant_from_row(row: np.ndarray) -> int:
    """Argmax topic id; ties go to the lowest id."""
    return int(np.argmax(row))


def dominant_topic(model: TopicModel, article: str) -> int:
    try:
        d = model.articles.index(article)
    except ValueError:
        raise DataError(f"article not in fitted corpus: {article!r}") from None
    return dominant_from_row(model.theta[d])


def fold_in(
    model: TopicModel,
    tokens: Sequence[str],
    sweeps: int = 25,
    seed: int = 0,
) -> np.ndarray:
    """theta row for an unseen document, sampled with frozen phi.

    Tokens outside the fitted vocabulary are ignored.
    """
    token_ids = {t: i for i, t in enumerate(model.vocabulary)}
    words = [token_ids[t] for t in tokens if t in token_ids]
    k, alpha = model.k, model.alpha
    if not words:
        return np.full(k, 1.0 / k)

    rng = np.random.default_rng(seed)
    phi = model.phi
    nd = [0] * k
    u = rng.random(len(words)).tolist()
    z = []
    for i, w in enumerate(words):
        t = min(int(u[i] * k), k - 1)
        z.append(t)
        nd[t] += 1
    for _ in range(sweeps):
        u = rng.random(len(words)).tolist()
        for i, w in enumerate(words):
            t = z[i]
            nd[t] -= 1
            total = 0.0
            weights = []
            for kk in range(k):
                wgt = (nd[kk] + alpha) * phi[kk, w]
                total += wgt
                weights.append(total)
            r = u[i] * total
            t = 0
            while weights[t] < r:
                t += 1
            z[i] = t
            nd[t] += 1
    return (np.asarray(nd, dtype=float) + alpha) / (len(words) + k * alpha)


def top_words(model: TopicModel, topic: int, n: int) -> list[str]:
    """The n highest-phi tokens of a topic, ties broken by token id."""
    v = len(model.vocabulary)
    if not 0 <= topic < model.k:
        raise UsageError(f"topic {topic} out of range for k={model.k}")
    if n > v:
        raise UsageError(f"n={n} exceeds vocabulary size {v}")
    row = model.phi[topic]
    order = np.lexsort((np.arange(v), -row))
    return [model.vocabulary[i] for i in order[:n]]


def assignments(model: TopicModel) -> dict[str, tuple[int, float]]:
    """article -> (dominant topic, that topic's theta weight)."""
    out: dict[str, tuple[int, float]] = {}
    for d, article in enumerate(model.articles):
        t = dominant_from_row(model.theta[d])
        out[article] = (t, float(model.theta[d, t]))
    return out


def write_assignments(path: str | Path, model: TopicModel) -> None:
    rows = (
        (article, t, weight)
        for article, (t, weight) in sorted(assignments(model).items())
    )
    write_tsv(path, TOPIC_ASSIGNMENT_COLUMNS, rows)


def _model_metadata(model: TopicModel) -> dict[str, object]:
    return {
        "k": model.k,
        "alpha": model.alpha,
        "beta": model.beta,
        "iterations": model.iterations,
        "seed": model.seed,
    }


def write_phi(path: str | Path, model: TopicModel) -> None:
    write_matrix_csv(path, model.phi, _model_metadata(model))


def write_theta(path: str | Path, model: TopicModel) -> None:
    write_matrix_csv(path, model.theta, _model_metadata(model))


def write_top_words(
    path: str | Path,
    model: TopicModel,
    n: int = 10,
    labels: Sequence[str] | None = None,
) -> None:
    with open_text(path, "wt") as fh:
        for topic in range(model.k):
            label = labels[topic] if labels and topic < len(labels) else f"topic-{topic}"
            words = " ".join(top_words(model, topic, min(n, len(model.vocabulary))))
            fh.write(f"{topic}\t{label}\t{words}\n")
