"""Greedy vs constrained decoding on a tensor whose greedy graph is invalid.

A gold graph from the bundled corpus is turned into a confident tensor, then
one arc is made to point the wrong way.  Greedy decoding keeps the broken
arc; the ILP finds the best graph that satisfies every rule.
"""
import numpy as np

from qdecomp import pipeline
from qdecomp.config import Config
from qdecomp.core import render_edge_tag
from qdecomp.decode_ilp import explain_dg, ilp_decode
from qdecomp.graphs import ProbTensor, graph_score, greedy_decode

cfg = Config(k_dum=1, k_dup=1)
for ex in pipeline.load_sample_corpus():
    gold = pipeline.to_dg(ex, cfg).dg
    if gold is not None and ex.decomposition.count(";") >= 2 and any(t.is_span for _, _, t in gold.edges):
        break
print(ex.question)
print(ex.decomposition)

tags = sorted({render_edge_tag(t) for _, _, t in gold.edges} | {"span", "duplicate"})
n = gold.token_count
p = np.zeros((n, n, len(tags)))
for i, j, t in gold.edges:
    p[i, j, tags.index(render_edge_tag(t))] = 0.9

# flip one span arc: greedy will follow it right to left
i, j, _ = next(e for e in gold.edges if e[2].is_span)
p[j, i, tags.index("span")] = 0.95
p[i, j, tags.index("span")] = 0.6

probs = ProbTensor(ex.id, n, tuple(tags), p, gold.tokens)
greedy = greedy_decode(probs)
print("\ngreedy violations:")
for family, detail in explain_dg(greedy):
    print(f"  {family}: {detail}")

out = ilp_decode(probs)
print(f"\nILP: {out.status}, score {out.objective:.3f} (greedy {graph_score(greedy, probs):.3f})")
print("violations after decoding:", [f for f, _ in explain_dg(out.graph)] or "none")
print("same as gold:", set(out.graph.edges) == set(gold.edges))
