"""Topic names, topic filters and wildcard matching.

Levels are separated by ``/``.  ``+`` matches exactly one level and ``#``
matches any number of trailing levels, including none, so ``a/#`` also
matches ``a``.
"""

from __future__ import annotations


class InvalidTopic(ValueError):
    pass


def validate_topic(name: str) -> str:
    if not isinstance(name, str) or not name:
        raise InvalidTopic("topic must be a non-empty string")
    if "+" in name or "#" in name:
        raise InvalidTopic(f"wildcards are not allowed in topic names: {name!r}")
    if "\x00" in name:
        raise InvalidTopic("NUL in topic")
    return name


def validate_filter(filter_: str) -> str:
    if not isinstance(filter_, str) or not filter_:
        raise InvalidTopic("filter must be a non-empty string")
    if "\x00" in filter_:
        raise InvalidTopic("NUL in filter")
    levels = filter_.split("/")
    for i, level in enumerate(levels):
        if "#" in level and (level != "#" or i != len(levels) - 1):
            raise InvalidTopic(f"'#' must be a whole, final level: {filter_!r}")
        if "+" in level and level != "+":
            raise InvalidTopic(f"'+' must occupy a whole level: {filter_!r}")
    return filter_


def _match(f: list[str], t: list[str]) -> bool:
    i = 0
    for i, level in enumerate(f):
        if level == "#":
            return True
        if i >= len(t):
            return False
        if level != "+" and level != t[i]:
            return False
    return len(f) == len(t)


def match(filter_: str, topic: str) -> bool:
    return _match(filter_.split("/"), topic.split("/"))


def _shape(filter_: str) -> tuple[list[str], bool, int, float]:
    """Fixed levels, trailing-'#' flag and the min/max topic depth matched."""
    levels = filter_.split("/")
    multi = levels[-1] == "#"
    fixed = levels[:-1] if multi else levels
    if multi:
        return fixed, True, max(len(fixed), 1), float("inf")
    return fixed, False, len(fixed), len(fixed)


def covers(resource: str, filter_: str) -> bool:
    """True iff every topic matched by ``filter_`` is matched by ``resource``.

    Topics have at least one level, so the depths ``filter_`` can match
    must fit inside those of ``resource``; then each level ``resource``
    fixes must be ``+`` or equal the filter's literal at that level.  Past
    the filter's fixed levels a trailing ``#`` allows anything, which only
    ``+`` covers.
    """
    r, _, r_min, r_max = _shape(resource)
    f, _, f_min, f_max = _shape(filter_)
    if not (r_min <= f_min and f_max <= r_max):
        return False
    for i, level in enumerate(r):
        if level == "+":
            continue
        if i >= len(f) or f[i] != level:
            return False
    return True
