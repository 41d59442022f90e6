"""Recomputes the expected toy-run trace with numpy.

Inputs are the committed document and text embeddings plus the cluster and
score replies in llm.jsonl; output is expected_trace.json.
"""
import json
import math
import re

import numpy as np

W0, SIM_T, SCORE_T, K = 0.7, 0.2, 60.0, 10


def load_vectors(path):
    rows = [json.loads(l) for l in open(path) if l.strip()]
    return {r["id"]: np.array(r["vector"], dtype=float) for r in rows}


docs = load_vectors("corpus_embeddings.jsonl")
texts = load_vectors("text_embeddings.jsonl")
queries = {json.loads(l)["_id"]: json.loads(l)["text"] for l in open("queries.jsonl")}
qrels = {}
for line in open("qrels/test.tsv").read().splitlines()[1:]:
    q, d, g = line.split("\t")
    qrels.setdefault(q, {})[d] = int(g)

clusters, scores = {}, {}
for line in open("llm.jsonl"):
    e = json.loads(line)
    reply = e["completions"][0]
    if e["kind"] == "ClusteringGeneration":
        obj = json.loads(reply[reply.index("{"):])
        clusters[e["query"]] = [obj[k] for k in sorted(obj)]
    elif e["kind"] == "Scoring":
        scores[e["query"]] = [float(x) for x in re.findall(r"\d+", reply[reply.index("["):])]


def cos(a, b):
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))


def fuse(strategy, q):
    init = texts[q]
    out = W0 * init
    for i, c in enumerate(clusters[q]):
        e = texts[c]
        if strategy == "SimDW":
            s = cos(init, e)
            if s >= SIM_T:
                out = out + s * e
        else:
            s = scores[q][i]
            if s >= SCORE_T:
                out = out + (s / 100.0) * e
    return out


def ndcg(ranked, judged):
    dcg = sum(judged.get(d, 0) / math.log2(i + 2) for i, d in enumerate(ranked[:K]))
    ideal = sorted((g for g in judged.values() if g > 0), reverse=True)[:K]
    idcg = sum(g / math.log2(i + 2) for i, g in enumerate(ideal))
    return dcg / idcg if idcg else 0.0


trace = {}
for strategy in ["SimDW", "ScoreDW"]:
    per_query = {}
    for qid, q in queries.items():
        v = fuse(strategy, q)
        ranked = sorted(docs, key=lambda d: (-cos(v, docs[d]), d))
        per_query[qid] = {"top10": ranked[:K], "ndcg": ndcg(ranked, qrels[qid])}
    trace[strategy] = per_query
with open("expected_trace.json", "w") as f:
    json.dump(trace, f, indent=1)
    f.write("\n")
for s, pq in trace.items():
    print(s, {q: round(v["ndcg"], 6) for q, v in pq.items()})
