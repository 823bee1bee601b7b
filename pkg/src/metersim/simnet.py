"""In-process datagram network for deterministic end-to-end simulations.

Endpoints look just enough like UDP sockets for the node and coordinator
cores: ``send(dest_addr, data)`` plus an inbox to drain.  An optional drop
policy decides per datagram whether the network loses it, which is how the
test harness injects deterministic packet loss.
"""

from __future__ import annotations

from collections import deque
from typing import Callable

DropPolicy = Callable[[tuple, tuple, bytes], bool]


class Endpoint:
    def __init__(self, network: "SimNetwork", name: str):
        self._network = network
        self.addr = (name, 0)
        self.inbox: deque[tuple[bytes, tuple]] = deque()

    def send(self, dest_addr: tuple, data: bytes) -> None:
        self._network.deliver(self.addr, dest_addr, data)

    def receive_all(self) -> list[tuple[bytes, tuple]]:
        out = list(self.inbox)
        self.inbox.clear()
        return out


class SimNetwork:
    """Registry of endpoints with immediate, possibly lossy, delivery."""

    def __init__(self, drop_policy: DropPolicy | None = None):
        self.drop_policy = drop_policy
        self.dropped = 0
        self.delivered = 0
        self._endpoints: dict[tuple, Endpoint] = {}

    def endpoint(self, name: str) -> Endpoint:
        ep = Endpoint(self, name)
        self._endpoints[ep.addr] = ep
        return ep

    def deliver(self, src_addr: tuple, dest_addr: tuple, data: bytes) -> None:
        if self.drop_policy is not None and self.drop_policy(src_addr, dest_addr, data):
            self.dropped += 1
            return
        dest = self._endpoints.get(dest_addr)
        if dest is None:
            self.dropped += 1
            return
        dest.inbox.append((data, src_addr))
        self.delivered += 1
