"""Scalar expression trees with reverse-mode differentiation.

Model residuals and objectives are declared as small expression trees so
they can be written in config files and differentiated analytically.  Two
evaluation paths exist: a straightforward recursive interpreter
(:func:`evaluate` / :func:`value_and_grad`) and a code generator
(:func:`compile_program`) that emits flat numpy statements for the hot
loops of the scenario NLP.  Both paths accept scalars or numpy arrays in
the environment and broadcast like numpy.
"""

from __future__ import annotations

import ast

import numpy as np

__all__ = [
    "Expr",
    "Const",
    "Var",
    "exp",
    "log",
    "log10",
    "sin",
    "sqrt",
    "as_expr",
    "evaluate",
    "value_and_grad",
    "compile_program",
    "parse_expression",
    "format_expression",
    "free_variables",
]

_LN10 = float(np.log(10.0))


class Expr:
    """Base node. Operators build new nodes; no evaluation happens here."""

    def __add__(self, other):
        return _Bin("add", self, as_expr(other))

    def __radd__(self, other):
        return _Bin("add", as_expr(other), self)

    def __sub__(self, other):
        return _Bin("sub", self, as_expr(other))

    def __rsub__(self, other):
        return _Bin("sub", as_expr(other), self)

    def __mul__(self, other):
        return _Bin("mul", self, as_expr(other))

    def __rmul__(self, other):
        return _Bin("mul", as_expr(other), self)

    def __truediv__(self, other):
        return _Bin("div", self, as_expr(other))

    def __rtruediv__(self, other):
        return _Bin("div", as_expr(other), self)

    def __pow__(self, other):
        return _Bin("pow", self, as_expr(other))

    def __rpow__(self, other):
        return _Bin("pow", as_expr(other), self)

    def __neg__(self):
        return _Un("neg", self)


class Const(Expr):
    __slots__ = ("value",)

    def __init__(self, value):
        self.value = float(value)


class Var(Expr):
    __slots__ = ("name",)

    def __init__(self, name: str):
        self.name = name


class _Bin(Expr):
    __slots__ = ("op", "a", "b")

    def __init__(self, op, a, b):
        self.op = op
        self.a = a
        self.b = b


class _Un(Expr):
    __slots__ = ("op", "a")

    def __init__(self, op, a):
        self.op = op
        self.a = a


def as_expr(value) -> Expr:
    if isinstance(value, Expr):
        return value
    return Const(value)


def exp(x):
    return _Un("exp", as_expr(x))


def log(x):
    return _Un("log", as_expr(x))


def log10(x):
    return _Un("log10", as_expr(x))


def sin(x):
    return _Un("sin", as_expr(x))


def sqrt(x):
    return _Un("sqrt", as_expr(x))


_UNARY_FN = {
    "neg": np.negative,
    "exp": np.exp,
    "log": np.log,
    "log10": np.log10,
    "sin": np.sin,
    "sqrt": np.sqrt,
}

_BINARY_FN = {
    "add": np.add,
    "sub": np.subtract,
    "mul": np.multiply,
    "div": np.divide,
    "pow": np.power,
}


def _topo(roots):
    """Topological order of the DAG rooted at ``roots`` (children first)."""
    order = []
    seen = set()

    def visit(node):
        if id(node) in seen:
            return
        seen.add(id(node))
        if isinstance(node, _Bin):
            visit(node.a)
            visit(node.b)
        elif isinstance(node, _Un):
            visit(node.a)
        order.append(node)

    for r in roots:
        visit(r)
    return order


def evaluate(expr: Expr, env: dict):
    """Evaluate ``expr`` with variable values taken from ``env``."""
    vals = {}
    for node in _topo([expr]):
        if isinstance(node, Const):
            vals[id(node)] = node.value
        elif isinstance(node, Var):
            vals[id(node)] = env[node.name]
        elif isinstance(node, _Un):
            vals[id(node)] = _UNARY_FN[node.op](vals[id(node.a)])
        else:
            vals[id(node)] = _BINARY_FN[node.op](vals[id(node.a)], vals[id(node.b)])
    return vals[id(expr)]


def _unbroadcast(adj, shape):
    adj = np.asarray(adj, dtype=float)
    if adj.shape == tuple(shape):
        return adj
    if shape == ():
        return np.sum(adj)
    while adj.ndim > len(shape):
        adj = adj.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and adj.shape[axis] != 1:
            adj = adj.sum(axis=axis, keepdims=True)
    return adj


def value_and_grad(expr: Expr, env: dict, names=None):
    """Value of ``expr`` and its derivatives with respect to ``names``.

    Reverse mode on the expression DAG. Returns ``(value, grads)`` where
    ``grads[name]`` has the shape of ``env[name]``.
    """
    order = _topo([expr])
    vals = {}
    for node in order:
        if isinstance(node, Const):
            vals[id(node)] = node.value
        elif isinstance(node, Var):
            vals[id(node)] = np.asarray(env[node.name], dtype=float)
        elif isinstance(node, _Un):
            vals[id(node)] = _UNARY_FN[node.op](vals[id(node.a)])
        else:
            vals[id(node)] = _BINARY_FN[node.op](vals[id(node.a)], vals[id(node.b)])

    adj = {id(expr): np.ones_like(np.asarray(vals[id(expr)], dtype=float))}
    var_grads: dict[str, np.ndarray] = {}
    for node in reversed(order):
        a = adj.get(id(node))
        if a is None:
            continue
        if isinstance(node, Var):
            shape = np.shape(env[node.name])
            g = _unbroadcast(a, shape)
            if node.name in var_grads:
                var_grads[node.name] = var_grads[node.name] + g
            else:
                var_grads[node.name] = g
        elif isinstance(node, _Un):
            va = vals[id(node.a)]
            if node.op == "neg":
                da = -a
            elif node.op == "exp":
                da = a * vals[id(node)]
            elif node.op == "log":
                da = a / va
            elif node.op == "log10":
                da = a / (va * _LN10)
            elif node.op == "sin":
                da = a * np.cos(va)
            elif node.op == "sqrt":
                da = a / (2.0 * vals[id(node)])
            else:  # pragma: no cover
                raise AssertionError(node.op)
            adj[id(node.a)] = adj.get(id(node.a), 0.0) + da
        elif isinstance(node, _Bin):
            va, vb = vals[id(node.a)], vals[id(node.b)]
            if node.op == "add":
                da, db = a, a
            elif node.op == "sub":
                da, db = a, -a
            elif node.op == "mul":
                da, db = a * vb, a * va
            elif node.op == "div":
                da = a / vb
                db = -a * va / (vb * vb)
            elif node.op == "pow":
                v = vals[id(node)]
                da = a * vb * np.power(va, vb - 1.0)
                if isinstance(node.b, Const):
                    db = None
                else:
                    db = a * v * np.log(va)
            else:  # pragma: no cover
                raise AssertionError(node.op)
            adj[id(node.a)] = adj.get(id(node.a), 0.0) + da
            if node.op != "pow" or db is not None:
                adj[id(node.b)] = adj.get(id(node.b), 0.0) + db

    value = vals[id(expr)]
    if names is None:
        return value, var_grads
    return value, {n: var_grads.get(n, np.zeros(np.shape(env.get(n, 0.0)))) for n in names}


def free_variables(expr: Expr) -> set[str]:
    return {n.name for n in _topo([expr]) if isinstance(n, Var)}


# ---------------------------------------------------------------------------
# code generation


def compile_program(outputs: list[Expr], inputs: list[str], grads: bool = True):
    """Compile expressions into one flat-numpy function.

    Returns ``fn(env) -> (values, grad_list)`` where ``values[k]`` is the
    value of ``outputs[k]`` and ``grad_list[k]`` maps each input name that
    ``outputs[k]`` depends on to its derivative (same shape as the value,
    inputs are assumed broadcast-compatible arrays of a common shape).

    The generated code assumes all environment entries share one shape, so
    no unbroadcast summation is emitted; the scenario NLP tiles its inputs
    accordingly.
    """
    order = _topo(outputs)
    idx = {id(node): i for i, node in enumerate(order)}
    lines = ["def _prog(env):"]
    for node in order:
        name = f"t{idx[id(node)]}"
        if isinstance(node, Const):
            lines.append(f"    {name} = {node.value!r}")
        elif isinstance(node, Var):
            if node.name not in inputs:
                raise KeyError(f"expression references unknown variable {node.name!r}")
            lines.append(f"    {name} = env[{node.name!r}]")
        elif isinstance(node, _Un):
            a = f"t{idx[id(node.a)]}"
            fn = {
                "neg": f"-{a}",
                "exp": f"np.exp({a})",
                "log": f"np.log({a})",
                "log10": f"np.log10({a})",
                "sin": f"np.sin({a})",
                "sqrt": f"np.sqrt({a})",
            }[node.op]
            lines.append(f"    {name} = {fn}")
        else:
            a = f"t{idx[id(node.a)]}"
            b = f"t{idx[id(node.b)]}"
            fn = {
                "add": f"{a} + {b}",
                "sub": f"{a} - {b}",
                "mul": f"{a} * {b}",
                "div": f"{a} / {b}",
                "pow": f"{a} ** {b}",
            }[node.op]
            lines.append(f"    {name} = {fn}")

    out_names = [f"t{idx[id(o)]}" for o in outputs]
    grad_exprs = []
    if grads:
        for k, out in enumerate(outputs):
            sub_order = _topo([out])
            adj: dict[int, str | None] = {id(out): None}  # None encodes adjoint == 1
            counter = [0]

            def emit(nid, term, k=k, adj=adj, counter=counter):
                counter[0] += 1
                new = f"a{k}_{counter[0]}"
                if nid not in adj:
                    lines.append(f"    {new} = {term}")
                else:
                    prev = adj[nid]
                    prev_ref = "_one" if prev is None else prev
                    lines.append(f"    {new} = {prev_ref} + ({term})")
                adj[nid] = new

            g: dict[str, str] = {}
            for node in reversed(sub_order):
                if id(node) not in adj:
                    continue
                a_sym = adj[id(node)]
                a_ref = "_one" if a_sym is None else a_sym
                if isinstance(node, Var):
                    if node.name in g:
                        tmp = f"g{k}_{idx[id(node)]}"
                        lines.append(f"    {tmp} = {g[node.name]} + {a_ref}")
                        g[node.name] = tmp
                    else:
                        g[node.name] = a_ref
                elif isinstance(node, _Un):
                    va = f"t{idx[id(node.a)]}"
                    vo = f"t{idx[id(node)]}"
                    term = {
                        "neg": f"-{a_ref}",
                        "exp": f"{a_ref} * {vo}",
                        "log": f"{a_ref} / {va}",
                        "log10": f"{a_ref} / ({va} * {_LN10!r})",
                        "sin": f"{a_ref} * np.cos({va})",
                        "sqrt": f"{a_ref} / (2.0 * {vo})",
                    }[node.op]
                    emit(id(node.a), term)
                elif isinstance(node, _Bin):
                    va = f"t{idx[id(node.a)]}"
                    vb = f"t{idx[id(node.b)]}"
                    vo = f"t{idx[id(node)]}"
                    if node.op == "add":
                        emit(id(node.a), a_ref)
                        emit(id(node.b), a_ref)
                    elif node.op == "sub":
                        emit(id(node.a), a_ref)
                        emit(id(node.b), f"-{a_ref}")
                    elif node.op == "mul":
                        emit(id(node.a), f"{a_ref} * {vb}")
                        emit(id(node.b), f"{a_ref} * {va}")
                    elif node.op == "div":
                        emit(id(node.a), f"{a_ref} / {vb}")
                        emit(id(node.b), f"-{a_ref} * {vo} / {vb}")
                    elif node.op == "pow":
                        emit(id(node.a), f"{a_ref} * {vb} * {va} ** ({vb} - 1.0)")
                        if not isinstance(node.b, Const):
                            emit(id(node.b), f"{a_ref} * {vo} * np.log({va})")
            grad_exprs.append(g)

    grad_literal = (
        "["
        + ", ".join(
            "{" + ", ".join(f"{n!r}: {s}" for n, s in g.items()) + "}" for g in grad_exprs
        )
        + "]"
    )
    lines.append(f"    return [{', '.join(out_names)}], {grad_literal}")
    src = "\n".join(lines)
    ns = {"np": np, "_one": 1.0}
    exec(compile(src, "<hybridbo-exprs>", "exec"), ns)
    return ns["_prog"]


# ---------------------------------------------------------------------------
# parsing / formatting

_ALLOWED_CALLS = {"exp": exp, "log": log, "log10": log10, "sin": sin, "sqrt": sqrt}

_BINOP = {ast.Add: "add", ast.Sub: "sub", ast.Mult: "mul", ast.Div: "div", ast.Pow: "pow"}


def parse_expression(text: str) -> Expr:
    """Parse an expression string into a tree.

    Supports +, -, *, /, **, unary minus, numeric literals, variable names,
    and the calls exp, log, log10, sin, sqrt.
    """

    def conv(node):
        if isinstance(node, ast.Expression):
            return conv(node.body)
        if isinstance(node, ast.BinOp):
            op = _BINOP.get(type(node.op))
            if op is None:
                raise ValueError(f"unsupported operator in {text!r}")
            return _Bin(op, conv(node.left), conv(node.right))
        if isinstance(node, ast.UnaryOp):
            if isinstance(node.op, ast.USub):
                return _Un("neg", conv(node.operand))
            if isinstance(node.op, ast.UAdd):
                return conv(node.operand)
            raise ValueError(f"unsupported unary operator in {text!r}")
        if isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in _ALLOWED_CALLS:
                raise ValueError(f"unsupported function call in {text!r}")
            if len(node.args) != 1 or node.keywords:
                raise ValueError(f"functions take one argument: {text!r}")
            return _ALLOWED_CALLS[node.func.id](conv(node.args[0]))
        if isinstance(node, ast.Name):
            return Var(node.id)
        if isinstance(node, ast.Constant):
            if not isinstance(node.value, (int, float)):
                raise ValueError(f"non-numeric constant in {text!r}")
            return Const(node.value)
        raise ValueError(f"unsupported syntax in {text!r}")

    return conv(ast.parse(text, mode="eval"))


def format_expression(expr: Expr) -> str:
    """Render a tree back to parseable text."""
    if isinstance(expr, Const):
        return repr(expr.value)
    if isinstance(expr, Var):
        return expr.name
    if isinstance(expr, _Un):
        if expr.op == "neg":
            return f"-({format_expression(expr.a)})"
        return f"{expr.op}({format_expression(expr.a)})"
    sym = {"add": "+", "sub": "-", "mul": "*", "div": "/", "pow": "**"}[expr.op]
    return f"({format_expression(expr.a)} {sym} {format_expression(expr.b)})"
