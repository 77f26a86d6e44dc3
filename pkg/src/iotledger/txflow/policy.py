"""Endorsement policies: boolean trees over organisation names.

String form: ``AND(Org1,Org2)``, ``OR(...)``, ``OUTOF(2,Org1,Org2,IoT)``.
Operators are case-insensitive, org names are case-sensitive.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass
from typing import Iterable, Union

from ..ledger.block import Endorsement


class PolicyError(ValueError):
    pass


class MixedReadWriteSets(Exception):
    pass


@dataclass(frozen=True)
class Org:
    name: str

    def evaluate(self, orgs: frozenset[str] | set[str]) -> bool:
        return self.name in orgs

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class And:
    children: tuple["Policy", ...]

    def __post_init__(self) -> None:
        if not self.children:
            raise PolicyError("AND needs at least one operand")

    def evaluate(self, orgs: frozenset[str] | set[str]) -> bool:
        return all(c.evaluate(orgs) for c in self.children)

    def __str__(self) -> str:
        return f"AND({','.join(map(str, self.children))})"


@dataclass(frozen=True)
class Or:
    children: tuple["Policy", ...]

    def __post_init__(self) -> None:
        if not self.children:
            raise PolicyError("OR needs at least one operand")

    def evaluate(self, orgs: frozenset[str] | set[str]) -> bool:
        return any(c.evaluate(orgs) for c in self.children)

    def __str__(self) -> str:
        return f"OR({','.join(map(str, self.children))})"


@dataclass(frozen=True)
class OutOf:
    n: int
    children: tuple["Policy", ...]

    def __post_init__(self) -> None:
        if not self.children:
            raise PolicyError("OUTOF needs at least one operand")
        if not 1 <= self.n <= len(self.children):
            raise PolicyError(f"OUTOF threshold {self.n} outside 1..{len(self.children)}")

    def evaluate(self, orgs: frozenset[str] | set[str]) -> bool:
        satisfied = 0
        for c in self.children:
            if c.evaluate(orgs):
                satisfied += 1
                if satisfied >= self.n:
                    return True
        return False

    def __str__(self) -> str:
        return f"OUTOF({self.n},{','.join(map(str, self.children))})"


Policy = Union[Org, And, Or, OutOf]

_TOKEN = re.compile(r"\s*(?:(\()|(\))|(,)|([A-Za-z0-9_.@\-]+))")


def parse_policy(text: str) -> Policy:
    tokens = []
    pos = 0
    text = text.strip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise PolicyError(f"unexpected character at {pos} in {text!r}")
        tokens.append(next(g for g in m.groups() if g is not None))
        pos = m.end()
    node, rest = _parse(tokens, text)
    if rest:
        raise PolicyError(f"trailing input in {text!r}")
    return node


def _parse(tokens: list[str], text: str) -> tuple[Policy, list[str]]:
    if not tokens:
        raise PolicyError(f"unexpected end of {text!r}")
    head, rest = tokens[0], tokens[1:]
    if head in "(),":
        raise PolicyError(f"unexpected {head!r} in {text!r}")
    op = head.upper()
    if not rest or rest[0] != "(":
        return Org(head), rest
    if op not in ("AND", "OR", "OUTOF"):
        raise PolicyError(f"unknown operator {head!r}")
    rest = rest[1:]
    n = None
    if op == "OUTOF":
        if not rest or not rest[0].isdigit():
            raise PolicyError("OUTOF needs a threshold")
        n = int(rest[0])
        rest = rest[1:]
        if not rest or rest[0] != ",":
            raise PolicyError("OUTOF threshold must be followed by operands")
        rest = rest[1:]
    children = []
    while True:
        child, rest = _parse(rest, text)
        children.append(child)
        if not rest:
            raise PolicyError(f"unclosed parenthesis in {text!r}")
        if rest[0] == ")":
            rest = rest[1:]
            break
        if rest[0] != ",":
            raise PolicyError(f"expected ',' or ')' in {text!r}")
        rest = rest[1:]
    if op == "AND":
        return And(tuple(children)), rest
    if op == "OR":
        return Or(tuple(children)), rest
    return OutOf(n, tuple(children)), rest


def policy_orgs(policy: Policy) -> set[str]:
    if isinstance(policy, Org):
        return {policy.name}
    return set().union(*(policy_orgs(c) for c in policy.children))


def default_policy(members: Iterable[str]) -> Policy:
    """Two-of-all-members, or the single member when only one exists."""
    orgs = tuple(Org(m) for m in members)
    return OutOf(min(2, len(orgs)), orgs)


def check_policy(policy: Policy, endorsements: Iterable[Endorsement]) -> bool:
    endorsements = list(endorsements)
    if len({e.rw_set_hash for e in endorsements}) > 1:
        raise MixedReadWriteSets("endorsements disagree on the read/write set")
    return policy.evaluate(frozenset(e.endorser.org for e in endorsements))


def minimal_endorsers(policy: Policy, candidates: list[str]) -> list[str]:
    """Smallest subset of ``candidates`` (earliest-first on ties) that
    satisfies the policy."""
    for size in range(1, len(candidates) + 1):
        for combo in itertools.combinations(candidates, size):
            if policy.evaluate(frozenset(combo)):
                return list(combo)
    raise PolicyError(f"policy {policy} cannot be satisfied by {candidates}")
