"""Coordinator: ingests meter telemetry, persists it, relays control commands."""

from .store import MeterRecord, ReadingStore, StoredReading
from .service import (
    CommandValidationError,
    CoordinatorCore,
    StaleMeterError,
    Ticket,
    UdpServer,
    UnknownMeterError,
)
from .api import make_api_server

__all__ = [
    "CommandValidationError",
    "CoordinatorCore",
    "MeterRecord",
    "ReadingStore",
    "StaleMeterError",
    "StoredReading",
    "Ticket",
    "UdpServer",
    "UnknownMeterError",
    "make_api_server",
]
