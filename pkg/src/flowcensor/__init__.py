"""Confidentiality-enforcing mediator for a loop-free query mini-language.

Programs answer partner requests by querying a single database row. They
run under a dynamic monitor: a flow tracker maintains value-indexed
partitions describing what each protected variable would reveal about the
row, and a censor generalizes declassified values along a hierarchy so
that an exhaustively simulated observer can never pin the row inside a
secret set.
"""

__version__ = "0.1.0"
