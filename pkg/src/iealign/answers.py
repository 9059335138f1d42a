"""Answer serialization and recovery.

``serialize_answer`` renders a gold extraction under a FormatSpec;
``parse_answer`` is its exact inverse on well-formed text (up to item order).
Lenient parsing never raises: it recovers the maximal well-formed prefix and
records diagnostics, which is the right default for noisy model outputs.
"""

from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Optional

from .formats import (
    OPTIONAL_SLOTS,
    TASK_SLOTS,
    CompiledTemplate,
    compile_template,
    compile_truncations,
    unquote_value,
)
from .model import AlignmentExample, Extraction, FormatSpec, TaskKind


class SerializationError(ValueError):
    pass


class ParseError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


@dataclass
class ParseResult:
    extraction: Extraction
    diagnostics: list[str] = field(default_factory=list)
    out_of_view: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.diagnostics


# ---------------------------------------------------------------------------
# Serialization


def _item_values(task: TaskKind, item: tuple, spec: FormatSpec) -> dict[str, Optional[str]]:
    slots = TASK_SLOTS[task]
    if task is TaskKind.EE:
        trig, etype, args = item
        rendered_args = spec.arg_separator.join(
            _render_item(compile_arg(spec), {"word": w, "role": r}) for w, r in args
        )
        return {"trigger": trig, "type": etype, "arguments": rendered_args}
    return {slot: item[i] if i < len(item) else None for i, slot in enumerate(slots)}


@lru_cache(maxsize=256)
def _compiled(template: str) -> CompiledTemplate:
    # EE arguments blobs may legitimately be empty (an event with no
    # arguments) and contain sub-template separators, hence optional + loose
    special = {"arguments"} if "{arguments}" in template else set()
    return compile_template(template, optional=special, loose=special)


@lru_cache(maxsize=64)
def _compiled_openie(template: str) -> tuple[CompiledTemplate, ...]:
    return tuple(compile_truncations(template, optional_count=2))


def compile_arg(spec: FormatSpec) -> CompiledTemplate:
    return _compiled(spec.arg_template)


def _render_item(tpl: CompiledTemplate, values: dict[str, Optional[str]]) -> str:
    return tpl.render(values)


def _render_openie_item(spec: FormatSpec, item: tuple) -> str:
    tpl = _compiled(spec.answer_template)
    values = _item_values(TaskKind.OPENIE, item, spec)
    keep = len(tpl.slots)
    while keep > 3 and values.get(tpl.slots[keep - 1]) is None:
        keep -= 1
    return tpl.render_truncated(values, keep)


def _json_item(task: TaskKind, item: tuple) -> dict:
    if task is TaskKind.EE:
        trig, etype, args = item
        return {
            "trigger": trig,
            "type": etype,
            "arguments": [{"word": w, "role": r} for w, r in args],
        }
    slots = TASK_SLOTS[task]
    out = {}
    for i, slot in enumerate(slots):
        value = item[i] if i < len(item) else None
        if value is None and slot in OPTIONAL_SLOTS.get(task, ()):
            continue
        out[slot] = value
    return out


def serialize_answer(gold: Extraction, spec: FormatSpec, seed: Optional[int] = None) -> str:
    """Render a gold extraction. Triplet items are shuffled under `seed`
    (pass None for a fixed gold order); empty gold renders the fail output."""
    if spec.task is not gold.task:
        raise SerializationError(f"format {spec.name!r} is for {spec.task.value}, gold is {gold.task.value}")
    if gold.task is TaskKind.ONDEMANDIE:
        return gold.table if gold.table is not None else spec.fail_output
    if gold.is_empty():
        return spec.fail_output
    items = list(gold.items)
    if spec.family == "Triplet" and seed is not None and len(items) > 1:
        random.Random(seed).shuffle(items)
    if spec.family == "Json":
        payload = {"task": gold.task.value, "items": [_json_item(gold.task, it) for it in items]}
        if gold.task is TaskKind.EAE:
            payload = {"task": gold.task.value, "trigger": gold.trigger, "items": payload["items"]}
        return json.dumps(payload, ensure_ascii=False)
    rendered = []
    for item in items:
        if gold.task is TaskKind.OPENIE:
            rendered.append(_render_openie_item(spec, item))
        else:
            values = _item_values(gold.task, item, spec)
            if any(v is None for v in values.values()):
                raise SerializationError(f"missing slot value in item {item!r}")
            tpl = _compiled(spec.answer_template)
            if gold.task is TaskKind.EE:
                # arguments are pre-rendered; substitute without re-quoting
                rendered.append(tpl.render(values, raw=("arguments",)))
            else:
                rendered.append(tpl.render(values))
    return spec.answer_prefix + spec.item_separator.join(rendered)


# ---------------------------------------------------------------------------
# Parsing


def _item_from_groups(task: TaskKind, groups: dict[str, str], spec: FormatSpec,
                      diagnostics: list[str]) -> tuple:
    slots = TASK_SLOTS[task]
    if task is TaskKind.EE:
        args_blob = groups.get("arguments", "")
        args = _parse_items_loop(args_blob, compile_arg(spec), spec.arg_separator,
                                 diagnostics, label="argument")
        arg_items = tuple((unquote_value(g["word"]), unquote_value(g["role"])) for g in args)
        return (unquote_value(groups["trigger"]), unquote_value(groups["type"]), arg_items)
    optional = set(OPTIONAL_SLOTS.get(task, ()))
    out = []
    for slot in slots:
        raw = groups.get(slot)
        if raw is None:
            out.append(None)
            continue
        value = unquote_value(raw)
        out.append(None if value == "" and slot in optional else value)
    return tuple(out[: len(slots)])


def _parse_items_loop(text: str, tpl: CompiledTemplate, separator: str,
                      diagnostics: list[str], label: str = "item") -> list[dict[str, str]]:
    items = []
    pos = 0
    n = len(text)
    sep = separator.strip()
    pattern = tpl.pattern
    if tpl.parts[-1] == "":
        # template ends with a slot: terminate it at the separator or the end,
        # otherwise the trailing lazy slot would match a single unit
        term = f"(?={re.escape(separator)}|$)" if sep else r"(?=\s|$)"
        pattern = re.compile(pattern.pattern + term)
    while pos < n:
        while pos < n and text[pos].isspace():
            pos += 1
        if pos >= n:
            break
        if sep and text.startswith(sep, pos):
            pos += len(sep)
            continue
        m = pattern.match(text, pos)
        if m is None:
            diagnostics.append(f"unparseable {label} at offset {pos}: {text[pos:pos + 40]!r}")
            break
        items.append(m.groupdict())
        pos = m.end()
    return items


def _parse_openie_items(text: str, spec: FormatSpec, diagnostics: list[str]) -> list[tuple]:
    variants = _compiled_openie(spec.answer_template)
    items = []
    pos = 0
    n = len(text)
    while pos < n:
        while pos < n and (text[pos].isspace() or text[pos] == ","):
            pos += 1
        if pos >= n:
            break
        matched = False
        for tpl in variants:
            m = tpl.pattern.match(text, pos)
            if m is not None:
                groups = m.groupdict()
                values = []
                for slot in TASK_SLOTS[TaskKind.OPENIE]:
                    raw = groups.get(slot)
                    value = unquote_value(raw) if raw else ""
                    values.append(value if value else None)
                if values[0] is None or values[1] is None:
                    continue  # degenerate match; try a shorter variant
                items.append(tuple(values))
                pos = m.end()
                matched = True
                break
        if not matched:
            diagnostics.append(f"unparseable item at offset {pos}: {text[pos:pos + 40]!r}")
            break
    return items


def _strip_prefix(text: str, spec: FormatSpec, diagnostics: list[str]) -> str:
    prefix = spec.answer_prefix
    if not prefix:
        return text
    stripped = text.lstrip()
    if stripped.startswith(prefix):
        return stripped[len(prefix):]
    if stripped.startswith(prefix.rstrip()):
        return stripped[len(prefix.rstrip()):]
    diagnostics.append(f"missing answer prefix {prefix!r}")
    return text


def parse_answer_lenient(
    text: str,
    spec: FormatSpec,
    view_labels: Optional[tuple[str, ...]] = None,
    trigger: Optional[str] = None,
) -> ParseResult:
    task = spec.task
    diagnostics: list[str] = []
    body = text.strip()
    if task is TaskKind.ONDEMANDIE:
        return ParseResult(Extraction(task, table=text))
    if body == spec.fail_output.strip() or body == spec.fail_output.strip().rstrip("."):
        return ParseResult(Extraction(task, trigger=trigger if task is TaskKind.EAE else None))
    body = _strip_prefix(body, spec, diagnostics).strip()
    if body == spec.fail_output.strip() or body == spec.fail_output.strip().rstrip("."):
        return ParseResult(Extraction(task, trigger=trigger if task is TaskKind.EAE else None))

    if spec.family == "Json":
        items, extra = _parse_json_body(body, task, diagnostics)
        if task is TaskKind.EAE and trigger is None:
            trigger = extra
    elif task is TaskKind.OPENIE:
        items = _parse_openie_items(body, spec, diagnostics)
    else:
        tpl = _compiled(spec.answer_template)
        groups = _parse_items_loop(body, tpl, spec.item_separator, diagnostics)
        items = [_item_from_groups(task, g, spec, diagnostics) for g in groups]

    deduped: list[tuple] = []
    seen = set()
    for it in items:
        if it in seen:
            diagnostics.append(f"duplicate item dropped: {it!r}")
        else:
            seen.add(it)
            deduped.append(it)

    extraction = Extraction(
        task,
        tuple(deduped),
        trigger=trigger if task is TaskKind.EAE else None,
    )
    out_of_view: tuple[str, ...] = ()
    if view_labels is not None:
        allowed = set(view_labels)
        out_of_view = tuple(lab for lab in extraction.labels_used() if lab not in allowed)
    return ParseResult(extraction, diagnostics, out_of_view)


def _parse_json_body(body: str, task: TaskKind, diagnostics: list[str]):
    extra = None
    try:
        payload = json.loads(body)
    except json.JSONDecodeError:
        # recover an embedded JSON object if the model wrapped it in prose
        start, end = body.find("{"), body.rfind("}")
        if start == -1 or end <= start:
            diagnostics.append("no JSON object found")
            return [], extra
        try:
            payload = json.loads(body[start : end + 1])
            diagnostics.append("recovered embedded JSON object")
        except json.JSONDecodeError as e:
            diagnostics.append(f"malformed JSON: {e}")
            return [], extra
    if not isinstance(payload, dict) or "items" not in payload:
        diagnostics.append("JSON payload missing 'items'")
        return [], extra
    if task is TaskKind.EAE:
        extra = payload.get("trigger")
    items = []
    slots = TASK_SLOTS[task]
    for obj in payload["items"]:
        if not isinstance(obj, dict):
            diagnostics.append(f"non-object item: {obj!r}")
            continue
        if task is TaskKind.EE:
            try:
                args = tuple((a["word"], a["role"]) for a in obj.get("arguments", []))
                items.append((obj["trigger"], obj["type"], args))
            except (KeyError, TypeError):
                diagnostics.append(f"bad EE item: {obj!r}")
            continue
        try:
            values = []
            for slot in slots:
                if slot in obj:
                    values.append(obj[slot])
                elif slot in OPTIONAL_SLOTS.get(task, ()):
                    values.append(None)
                else:
                    raise KeyError(slot)
            items.append(tuple(values))
        except KeyError as e:
            diagnostics.append(f"item missing slot {e}: {obj!r}")
    return items, extra


def parse_answer(
    text: str,
    spec: FormatSpec,
    view_labels: Optional[tuple[str, ...]] = None,
    trigger: Optional[str] = None,
) -> Extraction:
    """Strict parse: raises ParseError on any malformed input."""
    result = parse_answer_lenient(text, spec, view_labels, trigger)
    bad = [d for d in result.diagnostics if d.startswith(("unparseable", "malformed", "no JSON", "missing answer prefix", "JSON payload", "item missing", "bad EE", "non-object"))]
    if bad:
        m = re.search(r"offset (\d+)", bad[0])
        raise ParseError(bad[0], int(m.group(1)) if m else 0)
    return result.extraction


# ---------------------------------------------------------------------------
# Chain-of-thought composition

COT_SEPARATOR = "\n\n"


def attach_cot(example: AlignmentExample, explanation: str) -> AlignmentExample:
    """Prepend an explanation to the example's answer, keeping the answer
    machine-findable after a blank line."""
    if example.cot is not None:
        raise ValueError("example already carries a CoT explanation")
    if not explanation.strip():
        raise ValueError("empty explanation")
    explanation = explanation.strip()
    return replace(
        example,
        cot=explanation,
        output=explanation + COT_SEPARATOR + example.answer,
    )


def split_cot(output: str, cot: Optional[str]) -> str:
    """Recover the answer suffix of a possibly CoT-prefixed output."""
    if cot is None:
        return output
    prefix = cot + COT_SEPARATOR
    if not output.startswith(prefix):
        raise ValueError("output does not start with its recorded CoT")
    return output[len(prefix):]


# ---------------------------------------------------------------------------
# Markdown table helpers (on-demand IE)


def parse_markdown_table(text: str) -> tuple[list[str], list[list[str]]]:
    """Extract (headers, rows) from the first Markdown table in `text`."""
    lines = [ln.strip() for ln in text.splitlines() if ln.strip().startswith("|")]
    if not lines:
        return [], []

    def cells(line: str) -> list[str]:
        return [c.strip() for c in line.strip("|").split("|")]

    headers = cells(lines[0])
    rows = []
    for line in lines[1:]:
        row = cells(line)
        if all(re.fullmatch(r":?-{2,}:?", c) for c in row if c):
            continue
        rows.append(row)
    return headers, rows
