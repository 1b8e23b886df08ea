"""Fisher information spectrum of the full 11-parameter model.

Central-difference sensitivities of the observed trajectory in log-parameter
coordinates give the information matrix; its eigenvalues span about eleven
decades with near-uniform log spacing, the signature of a sloppy model.  The
participation heatmap shows the damping D owning the sloppiest mode and the
inertia H the next one, while the top six modes align with the six
identifiable parameters.
"""

import numpy as np

from genident.fim import effective_dimension, fim, sensitivities, spectrum
from genident.generator import IndependentParams

S = sensitivities(IndependentParams.nominal())
sp = spectrum(fim(S), S.param_names)

print("eigenvalues (descending):")
for lam in sp.eigenvalues:
    print(f"  {lam:12.4e}")
print(f"span: {np.log10(sp.eigenvalues[0] / sp.eigenvalues[-1]):.2f} decades")
print(f"sqrt of smallest eigenvalue: {np.sqrt(sp.eigenvalues[-1]):.3e} "
      "(the boundary-distance estimate used by the geodesic track)")

print("\nparticipation of each parameter in the two sloppiest modes:")
for i, name in enumerate(sp.param_names):
    print(f"  {name:5s}  sloppiest={sp.participation[i, -1]:.3f}  "
          f"next={sp.participation[i, -2]:.3f}")

proj = sp.identifiable_projection(6)
print("\nprojection of each parameter axis onto the top-6 mode subspace:")
for name, v in proj.items():
    tag = " <- identifiable" if v > 0.8 else ""
    print(f"  {name:5s}  {v:.3f}{tag}")

print("\neffective dimension at cutoff 1e-2:", effective_dimension(sp, 1e-2))
print("note: the sixth eigenvalue sits a few percent below 1e-2 at desk "
      "scale, so the literal count at that cutoff reads 5; any cutoff inside "
      f"({sp.eigenvalues[6]:.1e}, {sp.eigenvalues[5]:.1e}] yields 6")
