import socket

import pytest

from metersim.waveform import load_profiles


@pytest.fixture(scope="session")
def appliance_profiles():
    """The packaged reference appliance fixtures."""
    return load_profiles()


def free_tcp_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def free_udp_port() -> int:
    with socket.socket(socket.AF_INET, socket.SOCK_DGRAM) as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]
