c.FitOptions.algorithm = 'lagrangian'
c.FitOptions.max_iter = 200
c.FitOptions.tol_constraint = 1e-8
c.FitOptions.tol_score = 1e-8
c.FitOptions.step_control = 'halving'
c.FitOptions.max_halvings = 20
c.FitOptions.merit_weight = 10.0
c.PenaltyOptions.max_sweeps = 10000
c.PenaltyOptions.sweep_tol = 1e-10
c.PenaltyOptions.outer_tol = 1e-8
c.PenaltyOptions.gap_tol = 1e-6
