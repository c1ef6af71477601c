"""Periodic orbits and symbolic dynamics of the generalized N-centre problem.

A numerical laboratory built around fixed-energy Maupertuis minimization in
prescribed free-homotopy classes of the punctured surface: charts and
metrics (``geometry``), the singular potential and the Jacobi-metric
curvature (``potential``), loop words and tautness (``topology``), the
discrete functional and its minimizers (``variational``), flow integration
and first-return maps (``flow``), and the Bernoulli shift side of the
dictionary (``symbolic``).  ``scene``/``cli`` provide reproducible,
content-addressed experiment runs.
"""

from .geometry import ConformalPlane, FlatPlane, FlatTorus, distance, metric_tensor
from .potential import (
    CentreSpec,
    PotentialField,
    evaluate_V,
    grad_V,
    laplacian_V,
    energy_threshold,
    jacobi_curvature,
    asymptotic_kappa_J,
    mollified_potential,
)
from .topology import (
    HomotopyWord,
    crossing_word,
    default_rays,
    detect_singular_gons,
    is_admissible,
    self_intersection_count,
    word_for_class,
)
from .variational import (
    DiscreteLoop,
    MinimizeConfig,
    MinimizerResult,
    ObstacleConstraint,
    blowup_rescale,
    initial_loop,
    maupertuis_gradient,
    maupertuis_value,
    minimize_in_class,
    newton_residual,
    obstacle_minimize,
    reparametrize,
)
from .flow import (
    EnergyShellState,
    SectionSystem,
    build_section_system,
    first_return,
    integrate,
    itinerary,
)
from .symbolic import (
    AllowedLanguage,
    SymbolWindow,
    cantor_window_properties,
    d1,
    expected_itinerary,
    semi_conjugation_check,
    shift,
    uniqueness_probe,
    validate,
)

__version__ = "0.1.0"
