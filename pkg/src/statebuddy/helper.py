"""Helper content: state-keyed instructional documents with mode filtering.

The manifest (``manifest.json`` in the helper content root) maps state names
to ordered document entries, each tagged with a level:

    essential  — always served (even in skip mode)
    standard   — served in normal and detail mode
    detail     — served in detail mode only

so skip ⊆ normal ⊆ detail by construction.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

from .errors import StatebuddyError

LEVELS = ("essential", "standard", "detail")
MODES = ("normal", "skip", "detail")

_MODE_LEVELS = {
    "skip": {"essential"},
    "normal": {"essential", "standard"},
    "detail": {"essential", "standard", "detail"},
}


class HelperError(StatebuddyError):
    pass


@dataclass(frozen=True)
class HelperEntry:
    doc: str
    level: str = "standard"


class HelperManifest:
    def __init__(self, root: str, entries: dict[str, list[HelperEntry]]):
        self.root = root
        self.entries = entries

    @classmethod
    def empty(cls) -> "HelperManifest":
        return cls("", {})

    @classmethod
    def load(cls, root) -> "HelperManifest":
        """Load <root>/manifest.json; every document key must resolve to a
        file under the content root."""
        root = str(root)
        path = os.path.join(root, "manifest.json")
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        entries: dict[str, list[HelperEntry]] = {}
        missing: list[str] = []
        for state, raw_entries in doc.get("states", {}).items():
            parsed = []
            for raw in raw_entries:
                level = raw.get("level", "standard")
                if level not in LEVELS:
                    raise HelperError(f"helper manifest: bad level {level!r} for state {state!r}")
                entry = HelperEntry(doc=raw["doc"], level=level)
                if not os.path.isfile(os.path.join(root, entry.doc)):
                    missing.append(entry.doc)
                parsed.append(entry)
            entries[state] = parsed
        if missing:
            raise HelperError(f"helper manifest references missing documents: {', '.join(sorted(set(missing)))}")
        return cls(root, entries)

    def doc_keys(self) -> set[str]:
        return {e.doc for entries in self.entries.values() for e in entries}

    def docs_for(self, state: str, mode: str = "normal") -> list[str]:
        if mode not in MODES:
            raise HelperError(f"unknown helper mode {mode!r}")
        allowed = _MODE_LEVELS[mode]
        return [e.doc for e in self.entries.get(state, []) if e.level in allowed]

    def read_doc(self, key: str) -> str:
        path = os.path.normpath(os.path.join(self.root, key))
        if not path.startswith(os.path.normpath(self.root)):
            raise HelperError(f"helper document key escapes the content root: {key!r}")
        with open(path, "r", encoding="utf-8") as fh:
            return fh.read()


def helper_doc_warnings(workflow, manifest: HelperManifest) -> list[str]:
    """States naming a helper_doc that the manifest does not know: warnings,
    not errors."""
    known = manifest.doc_keys()
    out = []
    for s in workflow.states:
        if s.helper_doc and s.helper_doc not in known:
            out.append(
                f"workflow {workflow.id!r}: state {s.id!r} names helper_doc {s.helper_doc!r}"
                " which is not in the helper manifest"
            )
    return out
