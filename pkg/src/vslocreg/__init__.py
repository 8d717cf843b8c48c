"""Variance-stabilised local linear regression by skewing.

Modules: :mod:`kernels` (kernel families and integrals), :mod:`vtheory`
(the V(lambda) variance factor), :mod:`scenario` (analytic test problems),
:mod:`selection` (bias coefficient and rules a-h), :mod:`estimators`
(LL/SK/CC fits), :mod:`sim` (Monte Carlo harness) and :mod:`cli`.
"""
__version__ = "0.1.0"
