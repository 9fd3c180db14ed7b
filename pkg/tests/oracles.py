"""Independent reference implementations used as test oracles."""
import math
import re
import string

# (prediction, gold answers, expected EM, expected F1) worked out by hand
METRIC_PAIRS = [
    ("hawkins indiana", ["bloomington indiana"], 0.0, 0.5),
    ("Paris", ["paris"], 1.0, 1.0),
    ("The High Plains.", ["high plains"], 1.0, 1.0),
    ("", ["nonempty"], 0.0, 0.0),
    ("an apple a day", ["apple day"], 1.0, 1.0),
    ("new york city", ["new york"], 0.0, 0.8),
    ("york", ["new york"], 0.0, 2 / 3),
    ("1,800 to 7,000 ft", ["1800 to 7000 ft"], 1.0, 1.0),
    ("red red blue", ["red blue blue"], 0.0, 2 / 3),
    ("Dalreth", ["Kesmor", "Dalreth"], 1.0, 1.0),
    ("Orra Vantel", ["Vantel"], 0.0, 2 / 3),
    ("the the the", ["a"], 1.0, 1.0),
    ("cat", ["dog"], 0.0, 0.0),
    ("one two three four", ["four three two one"], 0.0, 1.0),
    ("Salt-Ledger", ["saltledger"], 1.0, 1.0),
    ("x y", ["x", "y z"], 0.0, 2 / 3),
    ("  spaced   out ", ["spaced out"], 1.0, 1.0),
    ("yes", ["no"], 0.0, 0.0),
    ("a b c d e", ["c"], 0.0, 0.4),  # "a" is an article
    ("Mibroul river", ["river", "Mibroul"], 0.0, 2 / 3),
]


def oracle_normalize(text):
    text = text.lower()
    text = "".join(ch for ch in text if ch not in string.punctuation)
    words = [w for w in text.split() if w not in ("a", "an", "the")]
    return " ".join(words)


def oracle_em(pred, golds):
    return 1.0 if any(oracle_normalize(pred) == oracle_normalize(g) for g in golds) else 0.0


def oracle_f1(pred, golds):
    best = 0.0
    p_words = oracle_normalize(pred).split()
    for g in golds:
        g_words = oracle_normalize(g).split()
        if not p_words or not g_words:
            score = 1.0 if p_words == g_words else 0.0
        else:
            remaining = list(g_words)
            overlap = 0
            for w in p_words:
                if w in remaining:
                    remaining.remove(w)
                    overlap += 1
            if overlap == 0:
                score = 0.0
            else:
                prec, rec = overlap / len(p_words), overlap / len(g_words)
                score = 2 * prec * rec / (prec + rec)
        best = max(best, score)
    return best


def bm25_oracle(docs, query, k1=1.2, b=0.75):
    """Textbook Okapi BM25 written out term by term."""
    tok = lambda s: re.findall(r"\w+", s.lower())
    bodies = [tok(d.title + " " + d.text) for d in docs]
    N = len(docs)
    avgdl = sum(len(x) for x in bodies) / N
    out = {}
    for i, body in enumerate(bodies):
        total = 0.0
        for q in tok(query):
            df = sum(1 for other in bodies if q in other)
            if df == 0:
                continue
            idf = math.log((N - df + 0.5) / (df + 0.5) + 1)
            tf = body.count(q)
            total += idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len(body) / avgdl))
        if total:
            out[i] = total
    return out
