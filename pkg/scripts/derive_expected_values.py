"""One-off symbolic derivation of the fixture closed forms.

Independent of the numerical code: the swept surfaces of the translation
families are parametrized symbolically and the constant ambient forms are
integrated with sympy.  Running the script prints the expected flux values;
the test suite imports `derive` and compares against the fixture catalog.

Conventions: ambient coordinates (x1, y1, x2, y2), symplectic form
dx1^dy1 + dx2^dy2, top form (dx1 + i dy1)^(dx2 + i dy2), cylinder of width w
along x1 and unit circumference along x2, moving with amplitude a in y1.
The relative cycle runs from the x1=0 boundary to the x1=w boundary with
increasing x1; the absolute cycle is the circumference with decreasing x2
(the ordering that makes the duality pairing the identity matrix).
"""

import sympy as sym


def derive(width=sym.Rational(1, 2), amplitude=sym.Rational(3, 10)):
    t, s = sym.symbols("t s")
    w, a = width, amplitude

    # Relative flux over the axial cycle: surface (t, s) -> f(t, gamma(s)),
    # gamma the axial path x1 = w s, and the motion y1 = a t.
    surf_rel = sym.Matrix([w * s, a * t, 0, 0])
    dt_ = surf_rel.diff(t)
    ds_ = surf_rel.diff(s)

    def omega(u, v):
        return (u[0] * v[1] - u[1] * v[0]) + (u[2] * v[3] - u[3] * v[2])

    rf = sym.integrate(sym.integrate(omega(dt_, ds_), (s, 0, 1)), (t, 0, 1))

    # Dual flux over the circumference: surface (t, q) -> f(t, sigma(q)),
    # sigma the circumference x2 = -q after the pairing normalization.
    q = sym.Symbol("q")
    surf_abs = sym.Matrix([0, a * t, -q, 0])
    dtb = surf_abs.diff(t)
    dqb = surf_abs.diff(q)

    def im_top(u, v):
        # Im[(dx1 + i dy1)^(dx2 + i dy2)] = dx1^dy2 + dy1^dx2
        return (u[0] * v[3] - u[3] * v[0]) + (u[1] * v[2] - u[2] * v[1])

    sf = sym.integrate(sym.integrate(im_top(dtb, dqb), (q, 0, 1)), (t, 0, 1))

    # L2 norm of the unit tangent form: |i_{dy1} omega|^2 integrated over the
    # flat cylinder of area w; the contraction is -dx1, of unit length.
    l2 = w

    return {"rf": sym.simplify(rf), "sf": sym.simplify(sf), "l2": sym.simplify(l2)}


if __name__ == "__main__":
    values = derive()
    print("relative flux over axial cycle:", values["rf"], "=", float(values["rf"]))
    print("dual flux over circumference:  ", values["sf"], "=", float(values["sf"]))
    print("L2 Gram of unit tangent:       ", values["l2"], "=", float(values["l2"]))
