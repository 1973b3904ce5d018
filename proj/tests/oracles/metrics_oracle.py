"""Hand-rolled trec_eval-convention metrics for the fixture (gain 2^g-1,
log2(rank+1) discount, relevance = grade >= 2)."""
import math, sys
from collections import defaultdict

def read(path, n):
    rows = [l.split() for l in open(path) if l.strip()]
    assert all(len(r) == n for r in rows)
    return rows

base = sys.argv[1]
qrels = defaultdict(dict)
for q, _, d, g in read(base + ".qrels", 4):
    qrels[q][d] = int(g)
run = defaultdict(list)
for q, _, d, r, s, t in read(base + ".run", 6):
    run[q].append((int(r), d))

def metrics(ranked, judged):
    gains = [judged.get(d, 0) for d in ranked]
    dcg = sum((2 ** g - 1) / math.log2(i + 2) for i, g in enumerate(gains[:10]))
    ideal = sorted((g for g in judged.values() if g > 0), reverse=True)
    idcg = sum((2 ** g - 1) / math.log2(i + 2) for i, g in enumerate(ideal[:10]))
    rel = [d for d, g in judged.items() if g >= 2]
    ndcg = dcg / idcg if idcg > 0 else None
    if not rel:
        return ndcg, None, None
    rr = 0.0
    for i, d in enumerate(ranked[:10]):
        if judged.get(d, 0) >= 2:
            rr = 1 / (i + 1)
            break
    rec = len([d for d in ranked[:1000] if judged.get(d, 0) >= 2]) / len(rel)
    return ndcg, rr, rec

def report(tag, condensed):
    vals = {}
    for q in sorted(run):
        if q not in qrels:
            continue
        ranked = [d for _, d in sorted(run[q])]
        if condensed:
            ranked = [d for d in ranked if d in qrels[q]]
        vals[q] = metrics(ranked, qrels[q])
        print(f"{tag}\t{q}\t" + "\t".join("nan" if v is None else repr(v) for v in vals[q]))
    for k, name in enumerate(["ndcg", "mrr", "recall"]):
        xs = [v[k] for v in vals.values() if v[k] is not None]
        print(f"{tag}\tmean_{name}\t{sum(xs) / len(xs)!r}")

report("raw", False)
report("condensed", True)
