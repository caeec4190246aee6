"""Which pairs of decompositions LF-EM treats as the same."""
from qdecomp.lexicon import default_lexicon
from qdecomp.lf_em import lf_em, normalize
from qdecomp.qdmr_to_lf import qdmr_to_lf

lex = default_lexicon()

CASES = [
    ("merge granularity",
     "return objects ;return #1 that are metal",
     "return metal objects"),
    ("parallel branches reordered",
     "return cubes ;return spheres ;return number of #1 ;return number of #2 ;return the sum of #3 and #4",
     "return spheres ;return cubes ;return number of #2 ;return number of #1 ;return the sum of #3 and #4"),
    ("plural and aux words",
     "return the cities from toronto",
     "return city toronto"),
    ("difference is ordered",
     "return apples ;return pears ;return the difference of #1 and #2",
     "return apples ;return pears ;return the difference of #2 and #1"),
]

for name, a, b in CASES:
    la, lb = qdmr_to_lf(a, lex), qdmr_to_lf(b, lex)
    print(f"{name}: {'match' if lf_em(la, lb, lex) else 'no match'}")
    print("   ", " | ".join(normalize(la, lex).steps))
    print("   ", " | ".join(normalize(lb, lex).steps))
