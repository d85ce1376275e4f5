"""A small, safe expression language for one-dimensional drift functions.

Expressions in ``x`` built from numeric constants, ``+ - * /``, unary minus,
``exp`` and ``tanh`` are compiled to a postfix program.  The same program is
evaluated by numpy (vectorised), by :func:`eval_scalar` (``math`` module) and
by the compiled kernels, so a drift typed on the command line runs at C speed
without an interpreter being embedded in the simulator.
"""
from __future__ import annotations

import ast
import math
from dataclasses import dataclass

import numpy as np

CONST, X, ADD, SUB, MUL, DIV, NEG, EXP, TANH = range(9)
MAX_DEPTH = 32

_BINOPS = {ast.Add: ADD, ast.Sub: SUB, ast.Mult: MUL, ast.Div: DIV}
_FUNCS = {"exp": EXP, "tanh": TANH}


class ExpressionError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Program:
    text: str
    ops: np.ndarray     # int32 opcodes
    consts: np.ndarray  # float64, read only where ops == CONST
    depth: int

    @property
    def transcendental(self) -> bool:
        return bool(np.isin(self.ops, (EXP, TANH)).any())

    def negated(self) -> "Program":
        return Program(
            f"-({self.text})",
            np.append(self.ops, np.int32(NEG)).astype(np.int32),
            np.append(self.consts, 0.0),
            self.depth,
        )

    def __call__(self, x):
        return eval_array(self, x)


def compile_expr(text: str) -> Program:
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse drift expression {text!r}: {exc.msg}") from None
    ops: list[int] = []
    consts: list[float] = []

    def emit(op, c=0.0):
        ops.append(op)
        consts.append(float(c))

    def walk(node):
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
                and not isinstance(node.value, bool):
            emit(CONST, node.value)
        elif isinstance(node, ast.Name):
            if node.id != "x":
                raise ExpressionError(f"unknown name {node.id!r}; only 'x' is allowed")
            emit(X)
        elif isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            walk(node.left)
            walk(node.right)
            emit(_BINOPS[type(node.op)])
        elif isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            walk(node.operand)
            if isinstance(node.op, ast.USub):
                emit(NEG)
        elif (isinstance(node, ast.Call) and isinstance(node.func, ast.Name)
              and node.func.id in _FUNCS and len(node.args) == 1 and not node.keywords):
            walk(node.args[0])
            emit(_FUNCS[node.func.id])
        else:
            raise ExpressionError(f"unsupported construct in {text!r}: {ast.dump(node)[:60]}")

    walk(tree.body)
    depth = cur = 0
    for op in ops:
        cur += 1 if op in (CONST, X) else (-1 if op in (ADD, SUB, MUL, DIV) else 0)
        depth = max(depth, cur)
    if depth > MAX_DEPTH:
        raise ExpressionError(f"expression too deeply nested (stack depth {depth} > {MAX_DEPTH})")
    return Program(text.strip(), np.asarray(ops, np.int32), np.asarray(consts, np.float64), depth)


def eval_scalar(prog: Program, x: float) -> float:
    # operation order mirrors the C evaluator exactly
    stack = [0.0] * (prog.depth + 1)
    sp = 0
    consts = prog.consts
    for i, op in enumerate(prog.ops.tolist()):
        if op == CONST:
            stack[sp] = float(consts[i])
            sp += 1
        elif op == X:
            stack[sp] = x
            sp += 1
        elif op == NEG:
            stack[sp - 1] = -stack[sp - 1]
        elif op == EXP:
            try:
                stack[sp - 1] = math.exp(stack[sp - 1])
            except OverflowError:
                stack[sp - 1] = math.inf
        elif op == TANH:
            stack[sp - 1] = math.tanh(stack[sp - 1])
        else:
            sp -= 1
            a, b = stack[sp - 1], stack[sp]
            if op == ADD:
                stack[sp - 1] = a + b
            elif op == SUB:
                stack[sp - 1] = a - b
            elif op == MUL:
                stack[sp - 1] = a * b
            else:
                if b != 0.0:
                    stack[sp - 1] = a / b
                elif a != 0.0 and a == a:
                    stack[sp - 1] = math.copysign(math.inf, a) * math.copysign(1.0, b)
                else:
                    stack[sp - 1] = math.nan
    return stack[0]


def eval_array(prog: Program, x):
    x = np.asarray(x, dtype=float)
    stack = []
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        for i, op in enumerate(prog.ops.tolist()):
            if op == CONST:
                stack.append(np.full_like(x, prog.consts[i]))
            elif op == X:
                stack.append(x)
            elif op == NEG:
                stack.append(-stack.pop())
            elif op == EXP:
                stack.append(np.exp(stack.pop()))
            elif op == TANH:
                stack.append(np.tanh(stack.pop()))
            else:
                b = stack.pop()
                a = stack.pop()
                stack.append({ADD: np.add, SUB: np.subtract, MUL: np.multiply, DIV: np.divide}[op](a, b))
    out = stack[0]
    return float(out) if out.ndim == 0 else out
