"""Travel-plan simulation and evaluation.

The library is organized by stage: ``core`` (plans and trajectories),
``spatial`` (clustering, routes, bearings), ``stamina``, ``sandbox``
(the simulation engine), ``metrics``, ``maop`` (plan generation pipelines)
and ``adapters`` (fixture and remote providers). ``travelsim.cli`` is the
command-line front end.
"""

__version__ = "0.1.0"
