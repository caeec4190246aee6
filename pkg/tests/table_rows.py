"""The fourteen operator examples, as (step text, position, expected LF).

The expected strings use the display form of :func:`format_lf_step`:
argument names spelled out (``condition`` rather than ``cond``), tokens
lowercased.  The SORT row is printed with ``sub=#2`` in the source table
although its step text only mentions ``#1``; the expectation follows the
step text.
"""

ROWS = [
    ("return cubes", 1, "SELECT[](sub=cubes)"),
    ("return #1 from Toronto", 2, "FILTER[](sub=#1, condition=from toronto)"),
    ("return the head coach of #1", 2, "PROJECT[](sub=#1, projection=the head coach of)"),
    ("return maximal number of #1", 2, "AGGREGATE[max](arg=#1)"),
    ("return the number of #2 for each #1", 3, "GROUP[count](key=#1, value=#2)"),
    ("return #2 where #3 is the lowest", 4, "SUPERLATIVE[min](sub=#2, attribute=#3)"),
    ("return #1 where #2 is more than 100", 3, "COMPARATIVE[more](sub=#1, attribute=#2, condition=100)"),
    ("return which is higher of #1, #2", 3, "COMPARISON[max](arg=#1, arg=#2)"),
    ("return #1, #2", 3, "UNION[](sub=#1, sub=#2)"),
    ("return parties in both #2 and #3", 4, "INTERSECTION[](intersect=#2, intersect=#3, projection=parties)"),
    ("return #1 besides #2", 3, "DISCARD[](sub=#1, exclude=#2)"),
    ("return #1 ordered by name", 2, "SORT[](sub=#1, order=name)"),
    ("return if #1 is the same as #2", 3, "BOOLEAN[equals](sub=#1, condition=#2)"),
    ("return the difference of #3 and #4", 5, "ARITHMETIC[diff](left=#3, right=#4)"),
]
