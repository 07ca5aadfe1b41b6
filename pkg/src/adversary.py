# src/adversary.py
import logging
import re
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .automaton import Edge
from .errors import ConflictingPolicy, MissingPolicy, ParseError, PreconditionError
from .utils import read_source

logger = logging.getLogger(__name__)

FIRST_EDGE = "first-edge"
POLICY_LINE = re.compile(r"^(\S+)\s+(\S+)\s*->\s*(\S+)$")


class Adversary(ABC):
    """1つのクロックの満了で複数の辺が有効なときに1本を選ぶ方策"""

    # 履歴に依存しない方策だけが行列エンジンで使える
    memoryless: bool = True

    @abstractmethod
    def resolve(self, history: Sequence[str], current: str, expiring: str, candidates: Sequence[Edge]) -> Edge:
        ...


@dataclass(frozen=True)
class StaticPolicy(Adversary):
    """(ロケーション, クロック) からアクション名への固定表"""

    entries: dict[tuple[str, str], str] = field(default_factory=dict)

    def resolve(self, history, current, expiring, candidates):
        if len(candidates) == 1:
            return candidates[0]
        action = self.entries.get((current, expiring))
        if action is None:
            raise MissingPolicy(f"({current}, {expiring}) に対する方策がありません")
        for edge in candidates:
            if edge.action == action:
                return edge
        raise MissingPolicy(f"({current}, {expiring}) の方策 {action} が候補の辺にありません")


@dataclass(frozen=True)
class FirstEdge(Adversary):
    """アクション名の辞書順で最初の辺を選ぶ"""

    def resolve(self, history, current, expiring, candidates):
        return min(candidates, key=lambda edge: edge.action)


def resolve(adv: Adversary, history: Sequence[str], current: str, expiring: str, candidates: Sequence[Edge]) -> Edge:
    if not candidates:
        raise PreconditionError(f"{current} でクロック {expiring} が満了しましたが辺がありません")
    for edge in candidates:
        if edge.source != current or edge.trigger_clock != expiring:
            raise PreconditionError(f"候補の辺 {edge.action} は ({current}, {expiring}) のものではありません")
    chosen = adv.resolve(tuple(history), current, expiring, list(candidates))
    if chosen not in candidates:
        raise PreconditionError(f"方策が候補外の辺 {chosen.action} を返しました")
    return chosen


def load_policy(text: str) -> StaticPolicy:
    """
    "<location> <clock> -> <action>" 形式の行を読み込みます。
    空行と # 以降のコメントは無視します。
    """
    entries: dict[tuple[str, str], str] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        match = POLICY_LINE.match(line)
        if not match:
            raise ParseError(f"方策の行を解釈できません: {raw!r}", line=number, column=1)
        location, clock, action = match.groups()
        previous = entries.get((location, clock))
        if previous is not None and previous != action:
            raise ConflictingPolicy(
                f"({location}, {clock}) に異なるアクション {previous} と {action} が指定されています",
                line=number,
                column=1,
            )
        entries[(location, clock)] = action
    logger.debug("loaded policy with %d entries", len(entries))
    return StaticPolicy(entries)


def load_adversary(spec: str | Path) -> Adversary:
    """組み込み名 first-edge または方策ファイルのパスから方策を作る"""
    if str(spec) == FIRST_EDGE:
        return FirstEdge()
    return load_policy(read_source(spec))
