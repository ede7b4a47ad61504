"""Prefix indexes over enumerable values (function names, enum members).

Two interchangeable structures: a character trie answering prefix queries in
O(depth), and a flat PrefixSet answering them in O(1) by materializing every
prefix. Both agree on every query for the same word set.

Child traversal is lexicographic so search results and prefix dumps are
deterministic across runs. Matching is exact and byte-wise; identifiers are
never case-folded or "corrected".
"""

from __future__ import annotations

from .errors import EmptyWord


class TrieNode:
    __slots__ = ("children", "is_end")

    def __init__(self):
        self.children: dict[str, TrieNode] = {}
        self.is_end = False


class Trie:
    def __init__(self, words=()):
        self.root = TrieNode()
        self.depth = 0
        self._count = 0
        self._frozen = False
        for w in words:
            self.insert(w)

    def freeze(self):
        """Forbid further inserts; reads are then safe to share across threads."""
        self._frozen = True
        return self

    def insert(self, word: str):
        if self._frozen:
            raise RuntimeError("trie is frozen")
        if not word:
            raise EmptyWord("cannot insert an empty word")
        node = self.root
        for ch in word:
            nxt = node.children.get(ch)
            if nxt is None:
                nxt = TrieNode()
                node.children[ch] = nxt
            node = nxt
        if not node.is_end:
            node.is_end = True
            self._count += 1
        self.depth = max(self.depth, len(word))
        return self

    def __len__(self) -> int:
        return self._count

    def is_prefix(self, prefix: str) -> bool:
        """True iff some inserted word has this prefix.

        The empty prefix counts as a prefix of anything, so it is True
        exactly when the trie is non-empty.
        """
        return self.probe(prefix)[0]

    def probe(self, prefix: str) -> tuple[bool, int]:
        """is_prefix plus the number of nodes inspected (root included)."""
        node = self.root
        visits = 1
        if not prefix:
            return self._count > 0, visits
        for ch in prefix:
            node = node.children.get(ch)
            if node is None:
                return False, visits
            visits += 1
        return True, visits

    def node_at(self, prefix: str) -> TrieNode | None:
        """The node reached by walking prefix, or None if the walk dies."""
        node = self.root
        for ch in prefix:
            node = node.children.get(ch)
            if node is None:
                return None
        return node

    def contains_word(self, word: str) -> bool:
        node = self.node_at(word)
        return node is not None and node.is_end

    def search(self, prefix: str, include_prefix: bool = True) -> list[str]:
        """All inserted words with the given prefix, lexicographically.

        With include_prefix=False the shared prefix is stripped from each
        result, leaving just the completions.
        """
        node = self.node_at(prefix)
        if node is None:
            return []
        initial = prefix if include_prefix else ""
        out: list[str] = []
        self._collect_words(node, initial, out)
        return out

    def _collect_words(self, node: TrieNode, current: str, out: list[str]):
        if node.is_end:
            out.append(current)
        for ch in sorted(node.children):
            self._collect_words(node.children[ch], current + ch, out)

    def get_all_prefixes(self) -> list[str]:
        """Every distinct non-empty prefix of every inserted word."""
        out: list[str] = []
        self._collect_prefixes(self.root, "", out)
        return out

    def _collect_prefixes(self, node: TrieNode, prefix: str, out: list[str]):
        if node is not self.root:
            out.append(prefix)
        for ch in sorted(node.children):
            self._collect_prefixes(node.children[ch], prefix + ch, out)


class PrefixSet:
    """Flat prefix index: O(1) membership at the cost of storing all prefixes."""

    def __init__(self, prefixes: frozenset[str], words: frozenset[str]):
        self.prefixes = prefixes
        self.words = words

    def membership(self, prefix: str) -> bool:
        return prefix in self.prefixes

    def __contains__(self, prefix: str) -> bool:
        return prefix in self.prefixes


def build_prefix_set(words) -> PrefixSet:
    """Index every non-empty prefix (full words included) of the given words."""
    prefixes: set[str] = set()
    full: set[str] = set()
    for w in words:
        if not w:
            raise EmptyWord("cannot index an empty word")
        full.add(w)
        for i in range(1, len(w) + 1):
            prefixes.add(w[:i])
    return PrefixSet(frozenset(prefixes), frozenset(full))
