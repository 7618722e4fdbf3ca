"""Version parsing, ordering and the semver mutation operators.

Versions are parsed leniently: the leading dotted numeric prefix gives
``major.minor.patch`` (missing parts default to 0) and whatever follows is
kept as an opaque prerelease tag.  ``1.0.4rc1`` therefore sorts just below
``1.0.4``.
"""

from __future__ import annotations

import functools
import logging
import re
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .errors import EmptyHistory, ParseError

log = logging.getLogger(__name__)

_VERSION_RE = re.compile(r"^v?(\d+)(?:\.(\d+))?(?:\.(\d+))?(.*)$", re.IGNORECASE)


@functools.total_ordering
@dataclass(frozen=True, eq=False)
class Version:
    major: int
    minor: int
    patch: int
    prerelease: Optional[str] = None
    raw: str = ""

    def __post_init__(self):
        if not self.raw:
            text = f"{self.major}.{self.minor}.{self.patch}"
            if self.prerelease:
                text += self.prerelease
            object.__setattr__(self, "raw", text)

    @property
    def is_prerelease(self) -> bool:
        return self.prerelease is not None

    def sort_key(self):
        # a release outranks every prerelease of the same numeric triple
        return (self.major, self.minor, self.patch, self.prerelease is None, self.raw)

    def __eq__(self, other):
        if not isinstance(other, Version):
            return NotImplemented
        return self.sort_key() == other.sort_key()

    def __lt__(self, other):
        if not isinstance(other, Version):
            return NotImplemented
        return self.sort_key() < other.sort_key()

    def __hash__(self):
        return hash(self.sort_key())

    def __str__(self):
        return self.raw

    def __repr__(self):
        return f"Version({self.raw!r})"


def parse_version(text: str) -> Version:
    """Parse ``text`` into a :class:`Version`.

    >>> parse_version("0.9")
    Version('0.9')
    >>> parse_version("1.0.4rc1").prerelease
    'rc1'
    """
    if text is None or not str(text).strip():
        raise ParseError("empty version string")
    raw = str(text).strip()
    m = _VERSION_RE.match(raw)
    if m is None:
        raise ParseError(f"no leading numeric component in {raw!r}")
    major, minor, patch, rest = m.groups()
    rest = rest.lstrip(".-_+") or None
    return Version(int(major), int(minor or 0), int(patch or 0), rest, raw)


def as_version(value) -> Version:
    return value if isinstance(value, Version) else parse_version(value)


@dataclass(frozen=True)
class ReleaseHistory:
    """Strictly ascending releases of one package.

    ``include_prerelease`` decides whether prereleases may be chosen by the
    mutation operators; they are always kept in ``releases``.
    """

    package: str
    releases: tuple[Version, ...]
    include_prerelease: bool = field(default=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "releases", tuple(self.releases))
        for a, b in zip(self.releases, self.releases[1:]):
            if not a < b:
                raise ValueError(
                    f"{self.package}: releases must be strictly ascending ({a} !< {b})"
                )

    @classmethod
    def from_strings(
        cls, package: str, versions: Iterable[str], include_prerelease: bool = False
    ) -> "ReleaseHistory":
        """Build a history from unsorted strings, dropping what cannot be parsed."""
        parsed = set()
        for text in versions:
            try:
                parsed.add(parse_version(text))
            except ParseError:
                log.warning("%s: dropping unparseable release %r", package, text)
        return cls(package, tuple(sorted(parsed)), include_prerelease)

    def __contains__(self, version) -> bool:
        return version in self.releases

    def __iter__(self):
        return iter(self.releases)

    def __len__(self):
        return len(self.releases)

    def targets(self) -> list[Version]:
        """Releases eligible as mutation targets."""
        if self.include_prerelease:
            return list(self.releases)
        return [v for v in self.releases if not v.is_prerelease]


def latest_version(history: ReleaseHistory, include_prerelease: bool = False) -> Version:
    if not history.releases:
        raise EmptyHistory(f"{history.package} has no releases")
    if not include_prerelease:
        finals = [v for v in history.releases if not v.is_prerelease]
        if finals:
            return finals[-1]
    return history.releases[-1]


def decrement_semver_major(history: ReleaseHistory, current: Version) -> Optional[Version]:
    """Latest release of the closest major version below ``current``."""
    lower = [v for v in history.targets() if v.major < current.major]
    if not lower:
        return None
    major = max(v.major for v in lower)
    return max(v for v in lower if v.major == major)


def decrement_semver_minor(history: ReleaseHistory, current: Version) -> Optional[Version]:
    """Latest release of the closest minor version below ``current`` within its major.

    Never crosses a major boundary.
    """
    lower = [
        v for v in history.targets() if v.major == current.major and v.minor < current.minor
    ]
    if not lower:
        return None
    minor = max(v.minor for v in lower)
    return max(v for v in lower if v.minor == minor)
