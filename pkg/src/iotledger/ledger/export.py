"""Block files: ``<dir>/<channel>/block_<n>.json`` in canonical JSON."""

from __future__ import annotations

import json
import re
from pathlib import Path

from ..encoding import canonical
from .block import Block, verify_chain

_BLOCK_FILE = re.compile(r"^block_(\d+)\.json$")


class CorruptBlockFile(ValueError):
    def __init__(self, number: int, reason: str) -> None:
        super().__init__(f"block {number}: {reason}")
        self.number = number


def block_path(root: Path, channel_id: str, number: int) -> Path:
    return Path(root) / channel_id / f"block_{number}.json"


def write_block(root: Path, channel_id: str, block: Block) -> Path:
    path = block_path(root, channel_id, block.number)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    tmp.write_bytes(canonical(block.to_dict()))
    tmp.replace(path)
    return path


def export_blocks(root: Path, channel_id: str, blocks: list[Block]) -> list[Path]:
    return [write_block(root, channel_id, b) for b in blocks]


def parse_block_bytes(number: int, raw: bytes) -> Block:
    """Parse one block file, insisting that the bytes are exactly the
    canonical encoding of what they decode to."""
    try:
        block = Block.from_dict(json.loads(raw.decode("utf-8")))
    except (UnicodeDecodeError, ValueError, TypeError, KeyError) as exc:
        raise CorruptBlockFile(number, f"unparseable ({exc})") from None
    if canonical(block.to_dict()) != raw:
        raise CorruptBlockFile(number, "not in canonical encoding")
    return block


def block_numbers(root: Path, channel_id: str) -> list[int]:
    folder = Path(root) / channel_id
    if not folder.is_dir():
        return []
    nums = []
    for p in folder.iterdir():
        m = _BLOCK_FILE.match(p.name)
        if m:
            nums.append(int(m.group(1)))
    return sorted(nums)


def load_blocks(root: Path, channel_id: str) -> list[Block]:
    """Load and parse every block; raises CorruptBlockFile on the first
    file that does not parse or is missing from the sequence."""
    blocks = []
    for expected, n in enumerate(block_numbers(root, channel_id)):
        if n != expected:
            raise CorruptBlockFile(expected, "missing")
        blocks.append(parse_block_bytes(n, block_path(root, channel_id, n).read_bytes()))
    return blocks


def verify_exported(root: Path, channel_id: str) -> int | None:
    """Number of the first broken block in an exported chain, or None."""
    nums = block_numbers(root, channel_id)
    if not nums:
        raise FileNotFoundError(f"no blocks for channel {channel_id} under {root}")
    blocks = []
    for expected, n in enumerate(nums):
        if n != expected:
            break
        try:
            blocks.append(parse_block_bytes(n, block_path(root, channel_id, n).read_bytes()))
        except CorruptBlockFile:
            break
    broken = verify_chain(blocks)
    if broken is not None:
        return broken
    return None if len(blocks) == len(nums) else len(blocks)
