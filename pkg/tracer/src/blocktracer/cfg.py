"""Basic-block segmentation of Python source from its AST.

A basic block is a maximal run of statements with a single entry point and a
single exit point: branch and loop headers terminate the block that contains
them, branch targets (arm bodies, loop bodies, except handlers) start fresh
ones, and return/break/continue/raise end the block they sit in. Function and
class bodies are segmented too (the tracer decides which frames it follows);
a multi-line def's header closes the enclosing block so that line spans stay
disjoint. Comprehensions and lambda bodies belong to their enclosing
statement's block.
"""

from __future__ import annotations

import ast
from dataclasses import dataclass, field


@dataclass
class BasicBlock:
    block_index: int
    start_line: int
    end_line: int
    source: str
    vars_after: dict[str, str] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "block_index": self.block_index,
            "start_line": self.start_line,
            "end_line": self.end_line,
            "source": self.source,
            "vars_after": self.vars_after,
        }


_LOOPS = (ast.While, ast.For, ast.AsyncFor)
_EXITS = (ast.Return, ast.Break, ast.Continue, ast.Raise)


def _header_end(stmt: ast.stmt) -> int:
    """Last line of a compound statement's header (test/iter/items clause)."""
    if isinstance(stmt, (ast.If, ast.While)):
        return stmt.test.end_lineno or stmt.lineno
    if isinstance(stmt, (ast.For, ast.AsyncFor)):
        return stmt.iter.end_lineno or stmt.lineno
    if isinstance(stmt, (ast.With, ast.AsyncWith)):
        return max((item.context_expr.end_lineno or stmt.lineno) for item in stmt.items)
    if isinstance(stmt, ast.Match):
        return stmt.subject.end_lineno or stmt.lineno
    return stmt.lineno


def segment_basic_blocks(source: str) -> list[BasicBlock]:
    """Return the program's basic blocks with line spans, in source order.

    Raises SyntaxError for unparseable source (callers map it to a
    compile_error report).
    """
    tree = ast.parse(source)
    spans: list[list[tuple[int, int]]] = []
    current: list[tuple[int, int]] = []

    def close() -> None:
        nonlocal current
        if current:
            spans.append(current)
            current = []

    def walk(body: list[ast.stmt]) -> None:
        nonlocal current
        for stmt in body:
            if isinstance(stmt, (ast.FunctionDef, ast.AsyncFunctionDef, ast.ClassDef)):
                first_body_line = stmt.body[0].lineno
                start = min([stmt.lineno] + [d.lineno for d in stmt.decorator_list])
                if first_body_line <= stmt.lineno:
                    # single-line def: keep the whole statement in one block
                    current.append((start, stmt.end_lineno or stmt.lineno))
                    continue
                current.append((start, first_body_line - 1))
                close()
                walk(stmt.body)
            elif isinstance(stmt, ast.If):
                current.append((stmt.lineno, _header_end(stmt)))
                close()
                walk(stmt.body)
                if stmt.orelse:
                    walk(stmt.orelse)
                close()
            elif isinstance(stmt, _LOOPS):
                current.append((stmt.lineno, _header_end(stmt)))
                close()
                walk(stmt.body)
                if stmt.orelse:
                    walk(stmt.orelse)
                close()
            elif isinstance(stmt, (ast.With, ast.AsyncWith)):
                current.append((stmt.lineno, _header_end(stmt)))
                close()
                walk(stmt.body)
                close()
            elif isinstance(stmt, ast.Try):
                current.append((stmt.lineno, stmt.lineno))
                close()
                walk(stmt.body)
                close()
                for handler in stmt.handlers:
                    current.append((handler.lineno, handler.lineno))
                    close()
                    walk(handler.body)
                    close()
                if stmt.orelse:
                    walk(stmt.orelse)
                    close()
                if stmt.finalbody:
                    walk(stmt.finalbody)
                    close()
            elif isinstance(stmt, ast.Match):
                current.append((stmt.lineno, _header_end(stmt)))
                close()
                for case in stmt.cases:
                    current.append((case.pattern.lineno, case.pattern.end_lineno or case.pattern.lineno))
                    close()
                    walk(case.body)
                    close()
            elif isinstance(stmt, _EXITS):
                current.append((stmt.lineno, stmt.end_lineno or stmt.lineno))
                close()
            else:
                current.append((stmt.lineno, stmt.end_lineno or stmt.lineno))
        close()

    walk(tree.body)

    lines = source.splitlines()
    blocks: list[BasicBlock] = []
    for entries in sorted(spans, key=lambda e: e[0][0]):
        start = entries[0][0]
        end = max(e[1] for e in entries)
        text = "\n".join(lines[start - 1 : end])
        blocks.append(BasicBlock(block_index=len(blocks), start_line=start, end_line=end, source=text))
    return blocks


def line_to_block_map(blocks: list[BasicBlock]) -> dict[int, int]:
    mapping: dict[int, int] = {}
    for block in blocks:
        for line in range(block.start_line, block.end_line + 1):
            mapping[line] = block.block_index
    return mapping
