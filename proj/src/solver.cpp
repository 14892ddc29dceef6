#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>

#include "gtforge/estimator.h"

// Levenberg-Marquardt with a block-tridiagonal elimination of the state
// chain and a Schur complement over the shared parameters (extrinsics,
// offset knots, gravity). Dense fallback below 200 states.

namespace gtforge {

namespace {

using Mat15 = Eigen::Matrix<double, 15, 15>;
using Vec15 = Eigen::Matrix<double, 15, 1>;

struct LinearSystem {
  int n = 0;  // states
  int S = 0;  // shared parameter dimension
  std::vector<Mat15> Hd;                 // n diagonal blocks
  std::vector<Mat15> Ho;                 // n-1 off-diagonal blocks (k, k+1)
  std::vector<Eigen::MatrixXd> Hsp;      // n blocks, 15 x S
  Eigen::MatrixXd Hpp;                   // S x S
  Eigen::VectorXd gs;                    // 15 n
  Eigen::VectorXd gp;                    // S

  void reset(int n_states, int shared) {
    n = n_states;
    S = shared;
    Hd.assign(n, Mat15::Zero());
    Ho.assign(n - 1, Mat15::Zero());
    Hsp.assign(n, Eigen::MatrixXd::Zero(15, S));
    Hpp = Eigen::MatrixXd::Zero(S, S);
    gs = Eigen::VectorXd::Zero(15 * n);
    gp = Eigen::VectorXd::Zero(S);
  }
};

struct FamilyStats {
  double sum_sq = 0.0;
  long n_elems = 0;
  double rms() const { return n_elems ? std::sqrt(sum_sq / double(n_elems)) : 0.0; }
};

bool in_degenerate_window(const std::vector<TimeInterval>& windows, double tau) {
  for (const auto& w : windows) {
    if (w.contains(tau)) return true;
  }
  return false;
}

// Total robustified cost; fills the normal equations when sys != nullptr.
// Re-preintegrates intervals whose state bias left the validity region of
// the stored linearization point.
// With frozen_ext set, factors in degenerate windows are evaluated at
// that calibration instead of ext. Those factors constrain only the
// inertial states, so a candidate step must be scored against the same
// objective the step was computed from, where the calibration they see
// is the current iterate, not the trial value.
double evaluate(const FactorGraphProblem& pb,
                const std::vector<InertialState>& states,
                const ExtrinsicState& ext, const GravityAlign& grav,
                std::vector<Preintegration>& preints, LinearSystem* sys,
                int* dropped, const ExtrinsicState* frozen_ext = nullptr,
                FamilyStats* imu_stats = nullptr,
                FamilyStats* mocap_stats = nullptr,
                FamilyStats* bias_stats = nullptr) {
  const int n = static_cast<int>(states.size());
  const int m = static_cast<int>(ext.offset_knots.size());
  const int S = 6 + m + 2;
  if (sys) sys->reset(n, S);
  if (dropped) *dropped = 0;

  double cost = 0.0;

  for (int k = 0; k + 1 < n; ++k) {
    const InertialState& a = states[k];
    const InertialState& b = states[k + 1];

    if ((a.b_a - preints[k].lin_bias_a).norm() > kMaxAccelBiasDelta ||
        (a.b_g - preints[k].lin_bias_g).norm() > kMaxGyroBiasDelta) {
      preints[k] = preintegrate(pb.imu, a.t, b.t, a.b_a, a.b_g, pb.cfg.imu_noise);
    }

    Eigen::LLT<Mat9> llt(preints[k].covariance);
    if (llt.info() != Eigen::Success) {
      llt.compute(preints[k].covariance + 1e-18 * Mat9::Identity());
    }
    const Eigen::Matrix<double, 9, 1> r = imu_residual(a, b, grav, preints[k]);
    const Eigen::Matrix<double, 9, 1> rw = llt.matrixL().solve(r);
    cost += 0.5 * rw.squaredNorm();
    if (imu_stats) {
      imu_stats->sum_sq += rw.squaredNorm();
      imu_stats->n_elems += 9;
    }
    if (sys) {
      const ImuFactorJacobians J = imu_jacobians(a, b, grav, preints[k]);
      const Eigen::Matrix<double, 9, 15> Ja = llt.matrixL().solve(J.d_state_k);
      const Eigen::Matrix<double, 9, 15> Jb = llt.matrixL().solve(J.d_state_k1);
      const Eigen::Matrix<double, 9, 2> Jg = llt.matrixL().solve(J.d_gravity);
      sys->Hd[k] += Ja.transpose() * Ja;
      sys->Hd[k + 1] += Jb.transpose() * Jb;
      sys->Ho[k] += Ja.transpose() * Jb;
      sys->gs.segment<15>(15 * k) += Ja.transpose() * rw;
      sys->gs.segment<15>(15 * (k + 1)) += Jb.transpose() * rw;
      const bool grav_masked =
          getenv("GTFORGE_MASK_GRAV") && pb.cfg.degeneracy_masking &&
          in_degenerate_window(pb.degenerate_windows,
                               0.5 * (a.t + b.t) + ext.offset_at(a.t));
      if (!grav_masked) {
        sys->Hsp[k].block<15, 2>(0, 6 + m) += Ja.transpose() * Jg;
        sys->Hsp[k + 1].block<15, 2>(0, 6 + m) += Jb.transpose() * Jg;
        sys->Hpp.block<2, 2>(6 + m, 6 + m) += Jg.transpose() * Jg;
        sys->gp.segment<2>(6 + m) += Jg.transpose() * rw;
      }
    }

    const Eigen::Matrix<double, 6, 1> rb = bias_residuals(a, b, pb.cfg.imu_noise);
    cost += 0.5 * rb.squaredNorm();
    if (bias_stats) {
      bias_stats->sum_sq += rb.squaredNorm();
      bias_stats->n_elems += 6;
    }
    if (sys) {
      const double dt = b.t - a.t;
      const double wa = 1.0 / (pb.cfg.imu_noise.accel_random_walk * std::sqrt(dt));
      const double wg = 1.0 / (pb.cfg.imu_noise.gyro_random_walk * std::sqrt(dt));
      Eigen::Matrix<double, 6, 15> Ja = Eigen::Matrix<double, 6, 15>::Zero();
      Ja.block<3, 3>(0, 9) = -wa * Mat3::Identity();
      Ja.block<3, 3>(3, 12) = -wg * Mat3::Identity();
      const Eigen::Matrix<double, 6, 15> Jb = -Ja;
      sys->Hd[k] += Ja.transpose() * Ja;
      sys->Hd[k + 1] += Jb.transpose() * Jb;
      sys->Ho[k] += Ja.transpose() * Jb;
      sys->gs.segment<15>(15 * k) += Ja.transpose() * rb;
      sys->gs.segment<15>(15 * (k + 1)) += Jb.transpose() * rb;
    }
  }

  Eigen::Matrix<double, 6, 1> mocap_sigma_inv;
  for (int i = 0; i < 6; ++i) {
    mocap_sigma_inv(i) = 1.0 / std::sqrt(pb.mocap_cov(i, i));
  }

  for (int k = 0; k < n; ++k) {
    const InertialState& s = states[k];
    const ExtrinsicState& ref_ext = frozen_ext ? *frozen_ext : ext;
    const bool masked =
        pb.cfg.degeneracy_masking &&
        in_degenerate_window(pb.degenerate_windows,
                             s.t + ref_ext.offset_at(s.t));
    const ExtrinsicState& e_used = masked ? ref_ext : ext;
    const double tau = s.t + e_used.offset_at(s.t);
    if (!pb.spline.in_domain(tau)) {
      if (dropped) ++*dropped;
      continue;
    }
    Eigen::Matrix<double, 6, 1> rw =
        mocap_residual(s, e_used, pb.spline).cwiseProduct(mocap_sigma_inv);
    if (mocap_stats) {
      mocap_stats->sum_sq += rw.squaredNorm();
      mocap_stats->n_elems += 6;
    }
    const double norm = rw.norm();
    const double delta = pb.cfg.huber_delta;
    double weight = 1.0;
    if (norm <= delta) {
      cost += 0.5 * rw.squaredNorm();
    } else {
      cost += delta * norm - 0.5 * delta * delta;
      weight = delta / norm;
    }
    if (sys) {
      const double sw = std::sqrt(weight);
      rw *= sw;
      MoCapFactorJacobians J = mocap_jacobians(s, e_used, pb.spline);

      Eigen::Matrix<double, 6, 15> Js = Eigen::Matrix<double, 6, 15>::Zero();
      Js.block<6, 3>(0, 0) = sw * mocap_sigma_inv.asDiagonal() * J.d_pose.leftCols<3>();
      Js.block<6, 3>(0, 6) = sw * mocap_sigma_inv.asDiagonal() * J.d_pose.rightCols<3>();

      Eigen::MatrixXd Jp = Eigen::MatrixXd::Zero(6, S);
      if (!masked) {
        Jp.block<6, 3>(0, 0) = sw * mocap_sigma_inv.asDiagonal() * J.d_p_MI;
        Jp.block<6, 3>(0, 3) = sw * mocap_sigma_inv.asDiagonal() * J.d_theta_MI;
        Jp.col(6 + J.knot_r) += sw * mocap_sigma_inv.cwiseProduct(J.d_offset.col(0));
        if (J.knot_s != J.knot_r) {
          Jp.col(6 + J.knot_s) += sw * mocap_sigma_inv.cwiseProduct(J.d_offset.col(1));
        }
      }
      sys->Hd[k] += Js.transpose() * Js;
      sys->Hsp[k] += Js.transpose() * Jp;
      sys->Hpp += Jp.transpose() * Jp;
      sys->gs.segment<15>(15 * k) += Js.transpose() * rw;
      sys->gp += Jp.transpose() * rw;
    }
  }

  if (!std::isfinite(cost)) {
    throw NumericalFailureError("evaluate: non-finite cost");
  }
  return cost;
}

// Solve (H + lambda diag(H)) dx = -g. Returns false when a block pivot
// fails, signalling the caller to raise the damping.
bool solve_step(const LinearSystem& sys, double lambda, Eigen::VectorXd* dx) {
  const int n = sys.n, S = sys.S;
  auto damp15 = [&](const Mat15& A) {
    Mat15 D = A;
    for (int i = 0; i < 15; ++i) {
      D(i, i) += lambda * std::max(A(i, i), 1e-12);
    }
    return D;
  };
  Eigen::MatrixXd Hpp = sys.Hpp;
  for (int i = 0; i < S; ++i) {
    Hpp(i, i) += lambda * std::max(sys.Hpp(i, i), 1e-12);
  }

  if (n < 200) {
    const int N = 15 * n + S;
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(N, N);
    Eigen::VectorXd g(N);
    for (int k = 0; k < n; ++k) {
      H.block<15, 15>(15 * k, 15 * k) = damp15(sys.Hd[k]);
      if (k + 1 < n) {
        H.block<15, 15>(15 * k, 15 * (k + 1)) = sys.Ho[k];
        H.block<15, 15>(15 * (k + 1), 15 * k) = sys.Ho[k].transpose();
      }
      H.block(15 * k, 15 * n, 15, S) = sys.Hsp[k];
      H.block(15 * n, 15 * k, S, 15) = sys.Hsp[k].transpose();
      g.segment<15>(15 * k) = sys.gs.segment<15>(15 * k);
    }
    H.block(15 * n, 15 * n, S, S) = Hpp;
    g.tail(S) = sys.gp;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
    if (ldlt.info() != Eigen::Success) return false;
    *dx = ldlt.solve(-g);
    return dx->allFinite();
  }

  // Block-tridiagonal elimination over the state chain with S+1 right-hand
  // sides (the shared coupling columns plus the gradient), then the Schur
  // system over the shared parameters.
  std::vector<Eigen::LLT<Mat15>> Dllt(n);
  std::vector<Mat15> Dinv_Ho(n - 1);  // D_k^-1 Ho_k, for back substitution
  Eigen::MatrixXd X(15 * n, S + 1);
  for (int k = 0; k < n; ++k) {
    X.block(15 * k, 0, 15, S) = sys.Hsp[k];
    X.block(15 * k, S, 15, 1) = sys.gs.segment<15>(15 * k);
  }

  Mat15 D = damp15(sys.Hd[0]);
  for (int k = 0; k < n; ++k) {
    Dllt[k].compute(D);
    if (Dllt[k].info() != Eigen::Success) return false;
    if (k + 1 < n) {
      Dinv_Ho[k] = Dllt[k].solve(sys.Ho[k]);
      X.block(15 * (k + 1), 0, 15, S + 1) -=
          sys.Ho[k].transpose() * Dllt[k].solve(X.block(15 * k, 0, 15, S + 1));
      D = damp15(sys.Hd[k + 1]) - sys.Ho[k].transpose() * Dinv_Ho[k];
    }
  }
  for (int k = n - 1; k >= 0; --k) {
    X.block(15 * k, 0, 15, S + 1) =
        Dllt[k].solve(X.block(15 * k, 0, 15, S + 1)).eval();
    if (k + 1 < n) {
      X.block(15 * k, 0, 15, S + 1) -=
          Dinv_Ho[k] * X.block(15 * (k + 1), 0, 15, S + 1);
    }
  }

  Eigen::MatrixXd Sc = Hpp;
  Eigen::VectorXd rp = sys.gp;
  for (int k = 0; k < n; ++k) {
    Sc -= sys.Hsp[k].transpose() * X.block(15 * k, 0, 15, S);
    rp -= sys.Hsp[k].transpose() * X.block(15 * k, S, 15, 1);
  }
  Eigen::LDLT<Eigen::MatrixXd> ldlt(Sc);
  if (ldlt.info() != Eigen::Success) return false;
  const Eigen::VectorXd dp = ldlt.solve(-rp);

  dx->resize(15 * n + S);
  dx->tail(S) = dp;
  for (int k = 0; k < n; ++k) {
    dx->segment<15>(15 * k) =
        -X.block(15 * k, S, 15, 1) - X.block(15 * k, 0, 15, S) * dp;
  }
  return dx->allFinite();
}

void apply_step(const Eigen::VectorXd& dx, std::vector<InertialState>* states,
                ExtrinsicState* ext, GravityAlign* grav) {
  const int n = static_cast<int>(states->size());
  for (int k = 0; k < n; ++k) {
    InertialState& s = (*states)[k];
    s.p_WI += dx.segment<3>(15 * k);
    s.v_WI += dx.segment<3>(15 * k + 3);
    s.q_WI = (s.q_WI * so3_exp(dx.segment<3>(15 * k + 6))).normalized();
    s.b_a += dx.segment<3>(15 * k + 9);
    s.b_g += dx.segment<3>(15 * k + 12);
  }
  const int base = 15 * n;
  const int m = static_cast<int>(ext->offset_knots.size());
  ext->p_MI += dx.segment<3>(base);
  ext->q_MI = (ext->q_MI * so3_exp(dx.segment<3>(base + 3))).normalized();
  for (int j = 0; j < m; ++j) {
    ext->offset_knots[j].t_MI += dx(base + 6 + j);
  }
  grav->roll += dx(base + 6 + m);
  grav->pitch += dx(base + 6 + m + 1);
}

}  // namespace

SolveReport optimize(FactorGraphProblem& problem) {
  SolveReport report;
  report.degenerate_window_count =
      static_cast<int>(problem.degenerate_windows.size());

  LinearSystem sys;
  int dropped = 0;
  double cost = evaluate(problem, problem.states, problem.extrinsics,
                         problem.gravity, problem.preintegrations, &sys,
                         &dropped);
  problem.mocap_factors_dropped = dropped;
  report.iteration_costs.push_back(cost);

  double lambda = 1e-4;
  double nu = 2.0;
  for (int iter = 0; iter < problem.cfg.max_iterations; ++iter) {
    report.iterations = iter + 1;
    const double grad_inf =
        std::max(sys.gs.lpNorm<Eigen::Infinity>(), sys.gp.lpNorm<Eigen::Infinity>());
    if (grad_inf < problem.cfg.gradient_tol) {
      report.converged = true;
      report.termination = "gradient";
      break;
    }

    bool accepted = false;
    while (!accepted) {
      Eigen::VectorXd dx;
      bool step_ok = solve_step(sys, lambda, &dx);
      double new_cost = std::numeric_limits<double>::infinity();
      std::vector<InertialState> cand_states;
      ExtrinsicState cand_ext;
      GravityAlign cand_grav;
      if (step_ok) {
        cand_states = problem.states;
        cand_ext = problem.extrinsics;
        cand_grav = problem.gravity;
        apply_step(dx, &cand_states, &cand_ext, &cand_grav);
        try {
          new_cost = evaluate(problem, cand_states, cand_ext, cand_grav,
                              problem.preintegrations, nullptr, nullptr,
                              &problem.extrinsics);
        } catch (const NumericalFailureError&) {
          new_cost = std::numeric_limits<double>::infinity();
        }
      }
      if (std::isfinite(new_cost) && new_cost < cost) {
        const double rel_decrease = (cost - new_cost) / std::max(cost, 1e-300);
        problem.states = std::move(cand_states);
        problem.extrinsics = cand_ext;
        problem.gravity = cand_grav;
        cost = new_cost;
        report.iteration_costs.push_back(cost);
        lambda = std::max(lambda / 3.0, 1e-12);
        nu = 2.0;
        accepted = true;
        if (rel_decrease < problem.cfg.cost_decrease_tol) {
          report.converged = true;
          report.termination = "cost";
        }
      } else {
        lambda *= nu;
        nu *= 2.0;
        if (lambda > 1e14) break;
      }
    }
    if (report.converged || !accepted) break;

    cost = evaluate(problem, problem.states, problem.extrinsics, problem.gravity,
                    problem.preintegrations, &sys, &dropped);
    problem.mocap_factors_dropped = dropped;
    if (getenv("GTFORGE_DEBUG_ITERS")) {
      const Quat& q = problem.extrinsics.q_MI;
      fprintf(stderr, "iter %d q_MI %.9f %.9f %.9f %.9f off0 %.7f\n", iter,
              q.w(), q.x(), q.y(), q.z(),
              problem.extrinsics.offset_knots.front().t_MI);
    }
  }
  if (!report.converged) report.termination = "max_iterations";

  FamilyStats imu_stats, mocap_stats, bias_stats;
  report.final_cost =
      evaluate(problem, problem.states, problem.extrinsics, problem.gravity,
               problem.preintegrations, nullptr, &dropped, nullptr,
               &imu_stats, &mocap_stats, &bias_stats);
  problem.mocap_factors_dropped = dropped;
  report.imu_rms = imu_stats.rms();
  report.mocap_rms = mocap_stats.rms();
  report.bias_rms = bias_stats.rms();
  return report;
}

}  // namespace gtforge
