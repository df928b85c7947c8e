"""Validation of structured feeling-alignment ratings produced by an LLM judge.

Expected shape::

    {"scores": {"Feeling_alignment": 0..10},
     "keywords": {"text": [...], "image": [...], "audio": [...]},   # 1-5 strings each
     "explanations": {"text": "...", "image": "...", "audio": "...", "overall": "..."},
     "notes": "..."}                                                # optional
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from jsonschema import Draft202012Validator

MODALITIES = ("text", "image", "audio")
EXPLANATIONS = ("text", "image", "audio", "overall")

_KEYWORD_LIST = {
    "type": "array",
    "minItems": 1,
    "maxItems": 5,
    "items": {"type": "string", "minLength": 1},
}
_EXPLANATION = {"type": "string", "pattern": r"\S"}

RATING_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["scores", "keywords", "explanations"],
    "additionalProperties": False,
    "properties": {
        "scores": {
            "type": "object",
            "required": ["Feeling_alignment"],
            "additionalProperties": False,
            "properties": {"Feeling_alignment": {"type": "integer", "minimum": 0, "maximum": 10}},
        },
        "keywords": {
            "type": "object",
            "required": list(MODALITIES),
            "additionalProperties": False,
            "properties": {m: _KEYWORD_LIST for m in MODALITIES},
        },
        "explanations": {
            "type": "object",
            "required": list(EXPLANATIONS),
            "additionalProperties": False,
            "properties": {e: _EXPLANATION for e in EXPLANATIONS},
        },
        "notes": {"type": "string"},
    },
}

_VALIDATOR = Draft202012Validator(RATING_SCHEMA)


class RatingParseError(ValueError):
    def __init__(self, exc: json.JSONDecodeError):
        self.line, self.column, self.pos = exc.lineno, exc.colno, exc.pos
        super().__init__(f"malformed JSON at line {exc.lineno}, column {exc.colno} (char {exc.pos}): {exc.msg}")


@dataclass(frozen=True)
class Violation:
    path: str
    constraint: str
    found: object

    def to_dict(self) -> dict:
        return {"path": self.path, "constraint": self.constraint, "found": self.found}


@dataclass(frozen=True)
class RatingOutput:
    feeling_alignment: int
    keywords: dict
    explanations: dict
    notes: str | None = None


def _dot(parts) -> str:
    return ".".join(str(p) for p in parts) or "$"


def _describe(err) -> tuple[str, str]:
    path = list(err.absolute_path)
    v = err.validator
    if v == "type":
        return _dot(path), f"type must be {err.validator_value}"
    if v in ("minimum", "maximum"):
        lo, hi = err.schema.get("minimum"), err.schema.get("maximum")
        return _dot(path), f"value must be in range [{lo},{hi}]"
    if v in ("minItems", "maxItems"):
        lo, hi = err.schema.get("minItems"), err.schema.get("maxItems")
        return _dot(path), f"length must be {lo}-{hi}"
    if v in ("minLength", "pattern"):
        return _dot(path), "must be a non-empty string"
    return _dot(path), err.message


def _violations(doc) -> list[Violation]:
    out = []
    for err in _VALIDATOR.iter_errors(doc):
        parent = list(err.absolute_path)
        if err.validator == "required":
            for name in err.validator_value:
                if isinstance(err.instance, dict) and name not in err.instance:
                    out.append(Violation(_dot(parent + [name]), "required", None))
        elif err.validator == "additionalProperties":
            allowed = set(err.schema.get("properties", {}))
            for name in err.instance:
                if name not in allowed:
                    out.append(Violation(_dot(parent + [name]), "unexpected field", err.instance[name]))
        else:
            path, constraint = _describe(err)
            out.append(Violation(path, constraint, err.instance))
    # one entry per (path, constraint), stable order
    unique = {(v.path, v.constraint): v for v in out}
    return sorted(unique.values(), key=lambda v: (v.path, v.constraint))


def validate_rating_doc(doc) -> RatingOutput | list[Violation]:
    violations = _violations(doc)
    if violations:
        return violations
    return RatingOutput(
        feeling_alignment=doc["scores"]["Feeling_alignment"],
        keywords={m: list(doc["keywords"][m]) for m in MODALITIES},
        explanations={e: doc["explanations"][e] for e in EXPLANATIONS},
        notes=doc.get("notes"),
    )


def validate_rating(json_text: str) -> RatingOutput | list[Violation]:
    """Parse and check one rating; returns the record or every violation found.

    Raises :class:`RatingParseError` (with position) for malformed JSON.
    """
    try:
        doc = json.loads(json_text)
    except json.JSONDecodeError as exc:
        raise RatingParseError(exc) from None
    return validate_rating_doc(doc)
