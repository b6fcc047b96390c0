"""Small-strain finite element core.

Submodules: ``elements`` (kinematics and element stiffness), ``assembly``,
``constraints`` (load cases and master-slave elimination), ``solver`` (linear
solve and strain recovery) and ``plasticity`` (elasto-perfectly-plastic
incremental solve). Import from the submodules directly.
"""
