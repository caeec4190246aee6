"""Walk one question through every stage: QDMR -> LF -> alignment -> SDG -> DG -> LF.

Run with ``python3 demos/census_walkthrough.py``.
"""
from qdecomp.alignment import align
from qdecomp.core import Question, format_lf_step, parse_qdmr_text, render_edge_tag
from qdecomp.graphs import augment_question, dg_to_lf, extract_sdg, sdg_to_dg
from qdecomp.lexicon import default_lexicon
from qdecomp.lf_em import lf_em, normalize
from qdecomp.qdmr_to_lf import qdmr_to_lf

QUESTION = "Which group from the census is smaller: Pacific islander or African American?"
QDMR = ("return census groups ;return #1 that is Pacific islander ;return #1 that is African American ;"
        "return size of #2 ;return size of #3 ;return which is lowest of #4 , #5")

lex = default_lexicon()
question = Question.from_text(QUESTION)
qdmr = parse_qdmr_text(QDMR)

print("QDMR")
for k, step in enumerate(qdmr.steps, 1):
    print(f"  {k}. {' '.join(step.tokens)}")

lf = qdmr_to_lf(qdmr, lex)
print("\nlogical form")
for k, step in enumerate(lf.steps, 1):
    print(f"  {k}. {format_lf_step(step)}")

aug = augment_question(question, lex, k_dum=2, k_dup=2)
print("\naugmented question")
print("  " + " ".join(f"{i}:{t}" for i, t in enumerate(aug.tokens)))

al = align(aug, qdmr, lex)
print(f"\nalignment ({al.status}, objective {al.objective})")
for k, step in enumerate(qdmr.steps):
    pairs = [(aug.tokens[i], step.tokens[j]) for i, kk, j in al.pairs if kk == k]
    print(f"  step {k + 1}: " + ", ".join(f"{q}~{s}" for q, s in pairs))

sdg = extract_sdg(lf, al, aug)
print("\nspan graph nodes")
for k, node in enumerate(sdg.nodes, 1):
    print(f"  {k}: {[aug.tokens[i] for i in node]}")

dg = sdg_to_dg(sdg, aug)
print("\ntoken graph")
for i, j, tag in dg.edges:
    print(f"  {aug.tokens[i]:>10} -> {aug.tokens[j]:<10} {render_edge_tag(tag)}")

back = dg_to_lf(dg, aug)
print("\nread back")
for k, step in enumerate(back.steps, 1):
    print(f"  {k}. {format_lf_step(step)}")
print("\nnormal form:", " | ".join(normalize(lf, lex).steps))
print("LF-EM self-match:", lf_em(back, lf, lex))
