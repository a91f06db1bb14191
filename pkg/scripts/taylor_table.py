"""Value and derivative of the underflow-truncated exp series.

Compares the loop program against direct summation, math.exp, and a central
difference of the program itself.  At x = 0 the loop stops after one term,
so the program is constant on |x| < 1e-12 and the AD derivative 0 is the right
answer there; the finite-difference step leaves that region.
"""

import math

from dualnum import ad_transform, apply_value, evaluate, load_program
from dualnum.evaluator import PairV, Scalar, Tangent, TangentV


def direct(x, eps=1e-12):
    total, i = 0.0, 0
    while True:
        term = x ** i / math.factorial(i)
        if abs(term) < eps:
            return total, i
        total += term
        i += 1


def main():
    prog = load_program("taylor_exp")
    src = evaluate(prog.term).value
    dual = evaluate(ad_transform(prog.term)).value
    f = lambda x: apply_value(src, Scalar(x)).value.r
    h = 1e-5

    print(f"{'x':>5} {'terms':>5} {'program':>18} {'direct sum':>18} {'exp(x)':>18} {'AD deriv':>18} {'fd deriv':>18}")
    for x in (-1.0, 0.0, 0.5, 1.0, 1.5, 2.0, 3.0):
        val = f(x)
        ref, n = direct(x)
        d = apply_value(dual, PairV(Scalar(x), TangentV(Tangent(1, (1.0,))))).value.snd.t.data[0]
        fd = (f(x + h) - f(x - h)) / (2 * h)
        print(f"{x:5.1f} {n:5d} {val:18.15f} {ref:18.15f} {math.exp(x):18.15f} {d:18.15f} {fd:18.15f}")


if __name__ == "__main__":
    main()
