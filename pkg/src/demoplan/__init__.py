"""Demonstration-to-plan pipeline for contact-rich manipulation.

Tactile vector fields segment a demonstration into object-status events,
a reasoner maps the events onto skills from a PDDL-translated skill library,
force/torque traces ground the skills' success thresholds, and the resulting
demonstration plan is generalized to new scenes and executed in a
resistance-profile simulator.
"""

__version__ = "0.1.0"
