"""Binary trie over IPv4 prefix bits for containment queries."""

from __future__ import annotations

import ipaddress
from typing import Iterable, Iterator


class _Node:
    __slots__ = ("zero", "one", "prefix", "below")

    def __init__(self):
        self.zero: _Node | None = None
        self.one: _Node | None = None
        self.prefix: ipaddress.IPv4Network | None = None
        self.below = False  # some stored prefix sits at or under this node


class PrefixTrie:
    """Set of IPv4 networks answering "which stored prefixes contain / are inside X".

    Every query walks at most 32 levels. The structure is append-only; once
    built it can be queried from many threads.
    """

    def __init__(self, prefixes: Iterable[ipaddress.IPv4Network] = ()):
        self._root = _Node()
        self._size = 0
        for p in prefixes:
            self.add(p)

    def __len__(self) -> int:
        return self._size

    def add(self, net: ipaddress.IPv4Network) -> None:
        addr = int(net.network_address)
        node = self._root
        node.below = True
        for depth in range(net.prefixlen):
            bit = (addr >> (31 - depth)) & 1
            nxt = node.one if bit else node.zero
            if nxt is None:
                nxt = _Node()
                if bit:
                    node.one = nxt
                else:
                    node.zero = nxt
            node = nxt
            node.below = True
        if node.prefix is None:
            self._size += 1
            node.prefix = net

    def _walk(self, net: ipaddress.IPv4Network) -> Iterator[_Node]:
        """Nodes on the path from the root towards ``net``, stopping early if it leaves the trie."""
        addr = int(net.network_address)
        node = self._root
        yield node
        for depth in range(net.prefixlen):
            node = node.one if (addr >> (31 - depth)) & 1 else node.zero
            if node is None:
                return
            yield node

    def __contains__(self, net: ipaddress.IPv4Network) -> bool:
        last = None
        for last in self._walk(net):
            pass
        return last is not None and last.prefix == net

    def covering(self, net: ipaddress.IPv4Network) -> list[ipaddress.IPv4Network]:
        """Stored prefixes equal to or containing ``net``, shortest first."""
        return [n.prefix for n in self._walk(net) if n.prefix is not None]

    def has_within(self, net: ipaddress.IPv4Network) -> bool:
        """True when some stored prefix equals ``net`` or is nested inside it."""
        depth = -1
        last = None
        for depth, last in enumerate(self._walk(net)):
            pass
        return last is not None and depth == net.prefixlen and last.below

    def related(self, net: ipaddress.IPv4Network) -> bool:
        """Equal, aggregate or more-specific relation with any stored prefix."""
        depth = -1
        for depth, node in enumerate(self._walk(net)):
            if node.prefix is not None:
                return True
        return depth == net.prefixlen and node.below

    def longest_match(self, address: ipaddress.IPv4Address) -> ipaddress.IPv4Network | None:
        found = self.covering(ipaddress.IPv4Network((int(address), 32)))
        return found[-1] if found else None
