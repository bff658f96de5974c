//! Gradient flow of the per-instance objective
//! `λ1 F(I_u) + λ2 F(I_f) + α F_box` by explicit Euler steps.

use crate::boxproj;
use crate::energy::{self, EnergyBreakdown, RegionMeans};
use crate::error::{Error, Result};
use crate::types::{
    BoxAnnotation, EvolutionConfig, InitMode, InstanceMask, LevelSetField, PixelGrid,
};

/// Bound applied to φ after every update.
pub const PHI_CLAMP: f64 = 50.0;
/// Bound applied to the initial signed distance.
pub const INIT_CLAMP: f64 = 3.0;
/// Objective increase tolerated before a step is halved.
pub const ASCENT_TOLERANCE: f64 = 1e-9;
pub const MAX_HALVINGS: usize = 10;
/// Side length of the checkerboard initialization tiles.
pub const CHECKER_TILE: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionState {
    pub phi: LevelSetField,
    pub iteration: usize,
    pub energy: EnergyBreakdown,
    pub box_loss: f64,
    pub total_objective: f64,
}

/// Inclusive `(row0, row1, col0, col1)` of the box scaled about its centre.
fn scaled_extent(h: usize, w: usize, scale: f64) -> (usize, usize, usize, usize) {
    let ih = ((scale * h as f64).round() as usize).clamp(1, h);
    let iw = ((scale * w as f64).round() as usize).clamp(1, w);
    let r0 = (h - ih) / 2;
    let c0 = (w - iw) / 2;
    (r0, r0 + ih - 1, c0, c0 + iw - 1)
}

/// Initial φ over an `h × w` frame given the inclusive extent of the seed
/// rectangle inside it.
pub(crate) fn init_values(
    h: usize,
    w: usize,
    seed: (usize, usize, usize, usize),
    mode: InitMode,
) -> Vec<f64> {
    let (r0, r1, c0, c1) = seed;
    let mut phi = Vec::with_capacity(h * w);
    for r in 0..h {
        for c in 0..w {
            let inside = (r0..=r1).contains(&r) && (c0..=c1).contains(&c);
            let v = match mode {
                InitMode::SignedDistance => {
                    let d = if inside {
                        (r - r0).min(r1 - r).min(c - c0).min(c1 - c) as f64
                    } else {
                        let dr = r0.saturating_sub(r).max(r.saturating_sub(r1));
                        let dc = c0.saturating_sub(c).max(c.saturating_sub(c1));
                        -(dr.max(dc) as f64)
                    };
                    d.clamp(-INIT_CLAMP, INIT_CLAMP)
                }
                InitMode::CenteredRect => {
                    if inside {
                        1.0
                    } else {
                        -1.0
                    }
                }
                InitMode::Checkerboard => {
                    if (r / CHECKER_TILE + c / CHECKER_TILE).is_multiple_of(2) {
                        1.0
                    } else {
                        -1.0
                    }
                }
            };
            phi.push(v);
        }
    }
    phi
}

/// Initial level set over `bx`, seeded from the box scaled by `scale` about
/// its centre.
///
/// `SignedDistance` is the Chebyshev distance to the scaled box's border
/// ring (zero on the ring, positive inside, negative outside) clamped to
/// `±3`.
pub fn initialize_phi(bx: &BoxAnnotation, mode: InitMode, scale: f64) -> LevelSetField {
    let (h, w) = (bx.height(), bx.width());
    let seed = scaled_extent(h, w, scale);
    LevelSetField::new(*bx, init_values(h, w, seed, mode)).expect("init values are finite")
}

/// Data, box region and weights for one instance in a fixed frame.
#[derive(Debug, Clone)]
pub struct InstanceProblem<'a> {
    image_term: &'a PixelGrid,
    feature_term: &'a PixelGrid,
    box_region: PixelGrid,
    config: &'a EvolutionConfig,
}

impl<'a> InstanceProblem<'a> {
    /// Box-restricted problem: the frame is the box and the box region is
    /// all ones.
    pub fn new(
        image_term: &'a PixelGrid,
        feature_term: &'a PixelGrid,
        config: &'a EvolutionConfig,
    ) -> Result<Self> {
        let region = crate::types::make_grid(image_term.height(), image_term.width(), 1, 1.0)?;
        Self::with_box_region(image_term, feature_term, region, config)
    }

    /// Problem with an explicit binary box region in the same frame.
    pub fn with_box_region(
        image_term: &'a PixelGrid,
        feature_term: &'a PixelGrid,
        box_region: PixelGrid,
        config: &'a EvolutionConfig,
    ) -> Result<Self> {
        config.validate()?;
        let (h, w) = (image_term.height(), image_term.width());
        if feature_term.height() != h || feature_term.width() != w {
            return Err(Error::invalid(
                "image and feature terms differ in frame size",
            ));
        }
        if box_region.height() != h || box_region.width() != w || box_region.channels() != 1 {
            return Err(Error::invalid(
                "box region must be a single-channel grid in the data frame",
            ));
        }
        Ok(Self {
            image_term,
            feature_term,
            box_region,
            config,
        })
    }

    pub fn height(&self) -> usize {
        self.image_term.height()
    }

    pub fn width(&self) -> usize {
        self.image_term.width()
    }

    pub fn config(&self) -> &EvolutionConfig {
        self.config
    }

    fn check_phi(&self, phi: &LevelSetField) -> Result<()> {
        if phi.height() != self.height() || phi.width() != self.width() {
            return Err(Error::invalid(format!(
                "phi {}x{} does not match problem frame {}x{}",
                phi.height(),
                phi.width(),
                self.height(),
                self.width()
            )));
        }
        Ok(())
    }

    /// Means of both data terms for the current φ.
    pub fn means(&self, phi: &LevelSetField) -> (RegionMeans, RegionMeans) {
        let chi = energy::sigmoid_values(phi.values());
        (
            energy::means_from_char(self.image_term, &chi),
            energy::means_from_char(self.feature_term, &chi),
        )
    }

    /// Evaluates energies and the box loss, refreshing the means from `phi`.
    pub fn state(&self, phi: LevelSetField, iteration: usize) -> Result<EvolutionState> {
        self.check_phi(&phi)?;
        let cfg = self.config;
        let chi = energy::sigmoid_values(phi.values());
        let mu = energy::means_from_char(self.image_term, &chi);
        let mf = energy::means_from_char(self.feature_term, &chi);
        let image = energy::term_with_means(self.image_term, &chi, &mu, cfg.gamma, cfg.eps_curv);
        let feature =
            energy::term_with_means(self.feature_term, &chi, &mf, cfg.gamma, cfg.eps_curv);
        let energy = energy::combine(image, feature, cfg);
        let box_loss = boxproj::loss_only(
            &chi,
            self.box_region.data(),
            self.height(),
            self.width(),
            cfg.eps_dice,
        );
        let total_objective = energy.total + cfg.alpha * box_loss;
        if !total_objective.is_finite() {
            return Err(Error::NumericalFailure {
                iteration,
                reason: "objective is not finite".into(),
            });
        }
        Ok(EvolutionState {
            phi,
            iteration,
            energy,
            box_loss,
            total_objective,
        })
    }

    /// Objective at `phi` with the region means held at the given values.
    pub fn frozen_objective(&self, phi: &[f64], means: &(RegionMeans, RegionMeans)) -> f64 {
        let cfg = self.config;
        let chi = energy::sigmoid_values(phi);
        let image =
            energy::term_with_means(self.image_term, &chi, &means.0, cfg.gamma, cfg.eps_curv);
        let feature =
            energy::term_with_means(self.feature_term, &chi, &means.1, cfg.gamma, cfg.eps_curv);
        let box_loss = boxproj::loss_only(
            &chi,
            self.box_region.data(),
            self.height(),
            self.width(),
            cfg.eps_dice,
        );
        energy::combine(image, feature, cfg).total + cfg.alpha * box_loss
    }

    /// Descent direction `-∂Objective/∂φ` with the means frozen at their
    /// values for `phi`.
    ///
    /// The length term is differentiated exactly through its forward
    /// differences, which is the discrete counterpart of
    /// `-σ'(φ) γ div(∇σ/|∇σ|)`.
    pub fn objective_gradient(&self, phi: &LevelSetField) -> Result<PixelGrid> {
        self.check_phi(phi)?;
        let cfg = self.config;
        let (h, w) = (self.height(), self.width());
        let chi = energy::sigmoid_values(phi.values());
        let (mu, mf) = self.means(phi);

        // ∂/∂χ of every term, then chained through σ'.
        let mut d_chi = vec![0.0; h * w];
        for (weight, data, means) in [
            (cfg.lambda1, self.image_term, &mu),
            (cfg.lambda2, self.feature_term, &mf),
        ] {
            if weight == 0.0 {
                continue;
            }
            let ch = data.channels();
            for (i, px) in data.data().chunks_exact(ch).enumerate() {
                let mut bracket = 0.0;
                for ((v, ci), co) in px.iter().zip(&means.inside).zip(&means.outside) {
                    bracket += (v - ci).powi(2) - (v - co).powi(2);
                }
                d_chi[i] += weight * bracket;
            }
        }

        let length_weight = (cfg.lambda1 + cfg.lambda2) * cfg.gamma;
        if length_weight != 0.0 {
            for r in 0..h {
                for c in 0..w {
                    let i = r * w + c;
                    let (gx, gy) = energy::forward_diffs(&chi, h, w, r, c);
                    let norm = (gx * gx + gy * gy + cfg.eps_curv * cfg.eps_curv).sqrt();
                    if c + 1 < w {
                        let t = length_weight * gx / norm;
                        d_chi[i + 1] += t;
                        d_chi[i] -= t;
                    }
                    if r + 1 < h {
                        let t = length_weight * gy / norm;
                        d_chi[i + w] += t;
                        d_chi[i] -= t;
                    }
                }
            }
        }

        if cfg.alpha != 0.0 {
            let (_, box_grad) =
                boxproj::loss_and_gradient(&chi, self.box_region.data(), h, w, cfg.eps_dice);
            for (d, g) in d_chi.iter_mut().zip(box_grad) {
                *d += cfg.alpha * g;
            }
        }

        let descent = d_chi
            .iter()
            .zip(&chi)
            .map(|(d, s)| -d * s * (1.0 - s))
            .collect();
        PixelGrid::new(h, w, 1, descent)
    }

    /// One explicit Euler update `φ + Δt · direction`, clamped to `±50`.
    pub fn evolve_step(
        &self,
        state: &EvolutionState,
        direction: &PixelGrid,
        delta_t: f64,
    ) -> Result<EvolutionState> {
        let iteration = state.iteration + 1;
        if direction.data().len() != state.phi.values().len() {
            return Err(Error::invalid("direction and phi differ in size"));
        }
        let mut phi = state.phi.clone();
        for (p, d) in phi.values_mut().iter_mut().zip(direction.data()) {
            let next = *p + delta_t * d;
            if !next.is_finite() {
                return Err(Error::NumericalFailure {
                    iteration,
                    reason: "non-finite level-set update".into(),
                });
            }
            *p = next.clamp(-PHI_CLAMP, PHI_CLAMP);
        }
        self.state(phi, iteration)
    }

    /// Iterates until the relative objective change stays below `rel_tol`
    /// for `patience` iterations or `max_iters` is reached.
    ///
    /// A step that raises the objective by more than [`ASCENT_TOLERANCE`]
    /// is retried with half the step size, up to [`MAX_HALVINGS`] times; if
    /// every retry still ascends, φ is left unchanged for that iteration.
    pub fn run(&self, phi0: LevelSetField) -> Result<EvolutionOutcome> {
        let cfg = self.config;
        let mut state = self.state(phi0, 0)?;
        let initial_objective = state.total_objective;
        let mut trajectory = Vec::with_capacity(cfg.max_iters);
        let mut streak = 0;
        let mut halvings = 0;

        while state.iteration < cfg.max_iters {
            let direction = self.objective_gradient(&state.phi)?;
            let mut dt = cfg.delta_t;
            let mut next = None;
            for attempt in 0..=MAX_HALVINGS {
                let candidate = self.evolve_step(&state, &direction, dt)?;
                if candidate.total_objective <= state.total_objective + ASCENT_TOLERANCE {
                    next = Some(candidate);
                    break;
                }
                if attempt < MAX_HALVINGS {
                    halvings += 1;
                    dt *= 0.5;
                }
            }
            let next = match next {
                Some(s) => s,
                None => EvolutionState {
                    iteration: state.iteration + 1,
                    ..state.clone()
                },
            };

            let prev = state.total_objective;
            let change = (next.total_objective - prev).abs() / prev.abs().max(f64::MIN_POSITIVE);
            trajectory.push(next.total_objective);
            state = next;
            if change < cfg.rel_tol {
                streak += 1;
                if streak >= cfg.patience.max(1) {
                    break;
                }
            } else {
                streak = 0;
            }
        }

        Ok(EvolutionOutcome {
            initial_objective,
            trajectory,
            halvings,
            state,
        })
    }
}

/// Final state of one evolution run.
#[derive(Debug, Clone)]
pub struct EvolutionOutcome {
    pub initial_objective: f64,
    /// Objective after each iteration.
    pub trajectory: Vec<f64>,
    /// Number of step halvings performed across the run.
    pub halvings: usize,
    pub state: EvolutionState,
}

impl EvolutionOutcome {
    pub fn iterations(&self) -> usize {
        self.trajectory.len()
    }
}

/// Descent direction for the box-restricted problem.
pub fn objective_gradient(
    state: &EvolutionState,
    image_term: &PixelGrid,
    feature_term: &PixelGrid,
    config: &EvolutionConfig,
) -> Result<PixelGrid> {
    InstanceProblem::new(image_term, feature_term, config)?.objective_gradient(&state.phi)
}

/// Runs the box-restricted evolution from `phi0` and embeds the thresholded
/// result (`φ > 0`) into an `image_height × image_width` frame.
pub fn evolve(
    phi0: LevelSetField,
    image_term: &PixelGrid,
    feature_term: &PixelGrid,
    config: &EvolutionConfig,
    image_height: usize,
    image_width: usize,
) -> Result<InstanceMask> {
    let problem = InstanceProblem::new(image_term, feature_term, config)?;
    let outcome = problem.run(phi0)?;
    InstanceMask::from_phi(
        outcome.state.phi,
        image_height,
        image_width,
        outcome.trajectory,
        outcome.state.total_objective,
    )
}
