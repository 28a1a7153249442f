from dataclasses import dataclass
from logging import getLogger
from threading import Lock
from typing import Any, Callable, Dict, Generic, Iterable, List, Optional, Tuple, TypeVar

logger = getLogger(__name__)

T = TypeVar("T")


class Registry(Generic[T]):
    """Thread-safe name -> entry mapping; the first registration of a name wins."""

    def __init__(self, kind: str) -> None:
        self._lock = Lock()
        self.kind = kind
        self._entries: Dict[str, T] = {}

    def register(self, name: str, entry: T) -> None:
        with self._lock:
            if name in self._entries:
                logger.warning(
                    f"{self.kind} with name '{name}' already registered. Keeping previous entry"
                )
                return
            self._entries[name] = entry

    def unregister(self, name: str) -> None:
        with self._lock:
            if name not in self._entries:
                logger.warning(f"no {self.kind} found with name '{name}'")
                return
            del self._entries[name]

    def get(self, name: str) -> Optional[T]:
        with self._lock:
            return self._entries.get(name)

    def names(self) -> List[str]:
        with self._lock:
            return sorted(self._entries)

    def collect(self) -> Iterable[Tuple[str, T]]:
        with self._lock:
            items = list(self._entries.items())
        yield from items

    def __contains__(self, name: object) -> bool:
        with self._lock:
            return name in self._entries


@dataclass(frozen=True)
class FixtureEntry:
    name: str
    factory: Callable[..., Any]
    summary: str = ""


FIXTURES: Registry[FixtureEntry] = Registry("fixture")


# identity id -> IdentityCheck, filled by etherphase.suite
CHECKS: Registry[Any] = Registry("identity check")
