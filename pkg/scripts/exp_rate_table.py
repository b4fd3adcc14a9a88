#!/usr/bin/env python3
"""Exponential model: numerical Legendre maximizer next to the closed form, per u = theta/theta0 - 1."""
import argparse

from ratebound.models import exp_model, exp_mu_star, exp_plugin_rate
from ratebound.rate import legendre

ap = argparse.ArgumentParser(description=__doc__)
ap.add_argument("u", type=float, nargs="*", default=[-0.5, 0.1, 0.5, 1.0, 3.0, 10.0])
a = ap.parse_args()

model = exp_model()
print("u,mu_star,mu_star_closed,rate_star,rate_plug_in")
for u in a.u:
    pt = legendre(model, 1.0 + u, 1.0)
    print(f"{u:.17g},{pt.mu:.17g},{exp_mu_star(u):.17g},{pt.rate:.17g},{exp_plugin_rate(u):.17g}")
