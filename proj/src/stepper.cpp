#include "sfmsfv/stepper.hpp"

#include <cmath>
#include <sstream>

#include "sfmsfv/log.hpp"

namespace sfv {
namespace {

Mat spd_inverse(const Mat& m) { return symmetrized(m.partialPivLu().inverse()); }

int find_block(const SubdomainRom& rom, Face f) {
  for (std::size_t b = 0; b < rom.face_blocks.size(); ++b)
    if (rom.face_blocks[b].face == f) return static_cast<int>(b);
  return -1;
}

Mat face_mass(const SubdomainRom& rom, int block) {
  const FaceBlock& fb = rom.face_blocks[block];
  return symmetrized(rom.sfrac.gamma_hat[0].block(fb.offset, fb.offset, fb.m, fb.m));
}

}  // namespace

CoupledModel couple_models(std::vector<SubdomainRom> roms, double sponge_rate) {
  CoupledModel model;
  model.roms = std::move(roms);
  model.sponge_rate = sponge_rate;
  const int n = model.subdomain_count();
  model.coupling.resize(n);
  for (int i = 0; i < n; ++i) {
    const SubdomainRom& r = model.roms[i];
    if (r.id != i) throw ConfigError("couple: models must be ordered by subdomain id");
    SubdomainCoupling& c = model.coupling[i];
    const int nb = static_cast<int>(r.face_blocks.size());
    c.block_link.assign(nb, -1);
    c.block_side.assign(nb, 0);
    for (int b = 0; b < nb; ++b) {
      c.face_mass.push_back(face_mass(r, b));
      c.face_mass_inv.push_back(spd_inverse(c.face_mass.back()));
    }
    c.layer_mass_inv.resize(r.layers());
    for (int j = 1; j < r.layers(); ++j) c.layer_mass_inv[j] = spd_inverse(r.sfrac.gamma_hat[j]);
  }
  for (int i = 0; i < n; ++i) {
    const SubdomainRom& r = model.roms[i];
    for (std::size_t b = 0; b < r.face_blocks.size(); ++b) {
      const FaceBlock& fb = r.face_blocks[b];
      if (fb.neighbor < 0 || fb.neighbor < i) continue;
      if (fb.neighbor >= n) throw ConfigError("couple: neighbour model missing");
      const SubdomainRom& other = model.roms[fb.neighbor];
      const int ob = find_block(other, opposite(fb.face));
      if (ob < 0 || other.face_blocks[ob].neighbor != i || other.face_blocks[ob].m != fb.m)
        throw ConfigError("couple: face layouts of subdomains " + std::to_string(i) + " and " +
                          std::to_string(fb.neighbor) + " do not match");
      FaceLink link;
      link.lo = i;
      link.hi = fb.neighbor;
      link.lo_block = static_cast<int>(b);
      link.hi_block = ob;
      link.m = fb.m;
      link.coupling = spd_inverse(model.coupling[i].face_mass_inv[b] + model.coupling[fb.neighbor].face_mass_inv[ob]);
      const int id = static_cast<int>(model.links.size());
      model.coupling[i].block_link[b] = id;
      model.coupling[i].block_side[b] = 0;
      model.coupling[fb.neighbor].block_link[ob] = id;
      model.coupling[fb.neighbor].block_side[ob] = 1;
      model.links.push_back(std::move(link));
    }
  }
  return model;
}

CoupledState zero_state(const CoupledModel& model) {
  CoupledState s;
  for (const auto& r : model.roms) {
    const Eigen::Index k = static_cast<Eigen::Index>(r.layers()) * r.width();
    s.prev.push_back(Vec::Zero(k));
    s.curr.push_back(Vec::Zero(k));
  }
  return s;
}

void synchronize_replicas(const CoupledModel& model, CoupledState& state) {
  for (const FaceLink& l : model.links) {
    const int olo = model.roms[l.lo].face_blocks[l.lo_block].offset;
    const int ohi = model.roms[l.hi].face_blocks[l.hi_block].offset;
    state.curr[l.hi].segment(ohi, l.m) = state.curr[l.lo].segment(olo, l.m);
    state.prev[l.hi].segment(ohi, l.m) = state.prev[l.lo].segment(olo, l.m);
  }
}

bool replicas_consistent(const CoupledModel& model, const CoupledState& state) {
  for (const FaceLink& l : model.links) {
    const int olo = model.roms[l.lo].face_blocks[l.lo_block].offset;
    const int ohi = model.roms[l.hi].face_blocks[l.hi_block].offset;
    for (int k = 0; k < l.m; ++k) {
      if (state.curr[l.hi][ohi + k] != state.curr[l.lo][olo + k]) return false;
      if (state.prev[l.hi][ohi + k] != state.prev[l.lo][olo + k]) return false;
    }
  }
  return true;
}

Vec layer_fluxes(const SFractionModel& model, const Vec& u) {
  const int L = model.layers();
  const Eigen::Index p = model.width();
  Vec q(L * p);
  for (int j = 0; j < L; ++j) {
    if (j + 1 < L)
      q.segment(j * p, p).noalias() = model.gamma[j] * (u.segment((j + 1) * p, p) - u.segment(j * p, p));
    else
      q.segment(j * p, p).noalias() = -(model.gamma[j] * u.segment(j * p, p));
  }
  return q;
}

namespace {

void interior_from_fluxes(const SFractionModel& model, const Vec& q, Vec& acc) {
  const int L = model.layers();
  const Eigen::Index p = model.width();
  for (int j = 1; j < L; ++j)
    acc.segment((j - 1) * p, p).noalias() = model.gamma_hat[j] * (q.segment(j * p, p) - q.segment((j - 1) * p, p));
}

}  // namespace

Vec interior_accel(const SFractionModel& model, const Vec& u) {
  const Vec q = layer_fluxes(model, u);
  Vec acc(std::max(0, model.layers() - 1) * model.width());
  interior_from_fluxes(model, q, acc);
  return acc;
}

Vec boundary_accel(const SubdomainRom& a, const SubdomainRom& b, const Vec& ua, const Vec& ub, Face face_of_a) {
  const int ba = find_block(a, face_of_a), bb = find_block(b, opposite(face_of_a));
  if (ba < 0 || bb < 0) throw ConfigError("boundary_accel: face not present in both models");
  const FaceBlock& fa = a.face_blocks[ba];
  const FaceBlock& fb = b.face_blocks[bb];
  const Vec qa = layer_fluxes(a.sfrac, ua), qb = layer_fluxes(b.sfrac, ub);
  const Mat s = spd_inverse(spd_inverse(face_mass(a, ba)) + spd_inverse(face_mass(b, bb)));
  return s * (qa.segment(fa.offset, fa.m) + qb.segment(fb.offset, fb.m));
}

Vec exterior_accel(const SubdomainRom& rom, const Vec& u, int block) {
  const FaceBlock& fb = rom.face_blocks[block];
  const Vec q = layer_fluxes(rom.sfrac, u);
  return face_mass(rom, block) * q.segment(fb.offset, fb.m);
}

void coupled_accel(const CoupledModel& model, const std::vector<Vec>& u, std::vector<Vec>& acc) {
  const int n = model.subdomain_count();
  acc.resize(n);
  std::vector<Vec> q(n);
  for (int i = 0; i < n; ++i) {
    const SubdomainRom& r = model.roms[i];
    const Eigen::Index p = r.width();
    q[i] = layer_fluxes(r.sfrac, u[i]);
    acc[i].resize(u[i].size());
    Vec tail(std::max<Eigen::Index>(0, u[i].size() - p));
    interior_from_fluxes(r.sfrac, q[i], tail);
    acc[i].tail(tail.size()) = tail;
    const SubdomainCoupling& c = model.coupling[i];
    for (std::size_t b = 0; b < r.face_blocks.size(); ++b) {
      if (c.block_link[b] >= 0) continue;
      const FaceBlock& fb = r.face_blocks[b];
      acc[i].segment(fb.offset, fb.m).noalias() = c.face_mass[b] * q[i].segment(fb.offset, fb.m);
    }
  }
  for (const FaceLink& l : model.links) {
    const FaceBlock& flo = model.roms[l.lo].face_blocks[l.lo_block];
    const FaceBlock& fhi = model.roms[l.hi].face_blocks[l.hi_block];
    const Vec a = l.coupling * (q[l.lo].segment(flo.offset, l.m) + q[l.hi].segment(fhi.offset, l.m));
    acc[l.lo].segment(flo.offset, l.m) = a;
    acc[l.hi].segment(fhi.offset, l.m) = a;
  }
}

namespace {

double local_mass_dot(const CoupledModel& model, int i, const Vec& a, const Vec& b) {
  const SubdomainRom& r = model.roms[i];
  const SubdomainCoupling& c = model.coupling[i];
  const Eigen::Index p = r.width();
  double s = 0.0;
  for (std::size_t k = 0; k < r.face_blocks.size(); ++k) {
    const FaceBlock& fb = r.face_blocks[k];
    s += a.segment(fb.offset, fb.m).dot(c.face_mass_inv[k] * b.segment(fb.offset, fb.m));
  }
  for (int j = 1; j < r.layers(); ++j) s += a.segment(j * p, p).dot(c.layer_mass_inv[j] * b.segment(j * p, p));
  return s;
}

double potential(const SFractionModel& model, const Vec& a, const Vec& b) {
  const int L = model.layers();
  const Eigen::Index p = model.width();
  double s = 0.0;
  for (int j = 0; j < L; ++j) {
    Vec da = -a.segment(j * p, p), db = -b.segment(j * p, p);
    if (j + 1 < L) {
      da += a.segment((j + 1) * p, p);
      db += b.segment((j + 1) * p, p);
    }
    s += da.dot(model.gamma[j] * db);
  }
  return s;
}

}  // namespace

double coupled_dot(const CoupledModel& model, const std::vector<Vec>& a, const std::vector<Vec>& b) {
  double s = 0.0;
  for (int i = 0; i < model.subdomain_count(); ++i) s += local_mass_dot(model, i, a[i], b[i]);
  return s;
}

double coupled_energy(const CoupledModel& model, const CoupledState& state, double dt) {
  double e = 0.0;
  for (int i = 0; i < model.subdomain_count(); ++i) {
    const Vec d = (state.curr[i] - state.prev[i]) / dt;
    e += 0.5 * local_mass_dot(model, i, d, d) + 0.5 * potential(model.roms[i].sfrac, state.curr[i], state.prev[i]);
  }
  return e;
}

namespace {

std::vector<Vec> split(const CoupledModel& model, const Vec& x) {
  std::vector<Vec> out;
  Eigen::Index off = 0;
  for (const auto& r : model.roms) {
    const Eigen::Index k = static_cast<Eigen::Index>(r.layers()) * r.width();
    out.push_back(x.segment(off, k));
    off += k;
  }
  return out;
}

Vec join(const std::vector<Vec>& parts) {
  Eigen::Index n = 0;
  for (const Vec& p : parts) n += p.size();
  Vec x(n);
  Eigen::Index off = 0;
  for (const Vec& p : parts) {
    x.segment(off, p.size()) = p;
    off += p.size();
  }
  return x;
}

}  // namespace

CflEstimate cfl_estimate_coupled(const CoupledModel& model, int max_iterations, double tolerance) {
  PowerIterationProblem p;
  for (const auto& r : model.roms) p.size += r.layers() * r.width();
  p.apply = [&](const Vec& x, Vec& y) {
    CoupledState s;
    s.curr = split(model, x);
    s.prev = s.curr;
    synchronize_replicas(model, s);
    std::vector<Vec> acc;
    coupled_accel(model, s.curr, acc);
    y = -join(acc);
  };
  p.dot = [&](const Vec& a, const Vec& b) { return coupled_dot(model, split(model, a), split(model, b)); };
  const LambdaEstimate est = power_iteration(p, max_iterations, tolerance);
  CflEstimate out;
  out.lambda = est.lambda;
  out.iterations = est.iterations;
  out.converged = est.converged;
  out.dt_max = est.lambda > 0.0 ? stability_limit(est.lambda) : std::numeric_limits<double>::infinity();
  return out;
}

Vec project_source(const SubdomainRom& rom, int local_node) {
  const double w = std::sqrt(rom.mass[local_node]) / rom.c[local_node];
  const Vec y = rom.basis_row(local_node).transpose() * w;
  Vec g(y.size());
  const Eigen::Index p = rom.width();
  for (int j = 0; j < rom.layers(); ++j) g.segment(j * p, p) = rom.sfrac.g[j] * y.segment(j * p, p);
  return g;
}

namespace {

std::vector<int> containing_subdomains(const DomainPartition& partition, int node) {
  std::vector<int> subs;
  for (const auto& s : partition.subdomains)
    if (s.find_local(partition.grid, node) >= 0) subs.push_back(s.id);
  return subs;
}

}  // namespace

SourceForcing make_source_forcing(const CoupledModel& model, const DomainPartition& partition,
                                  const SourceSpec& source) {
  const int node = partition.grid.nearest_node(source.position);
  const std::vector<int> subs = containing_subdomains(partition, node);
  if (subs.size() != 1)
    throw ConfigError("source lies on a shared interface node; move it inside one subdomain");
  SourceForcing sf;
  sf.spec = source;
  sf.subdomain = subs[0];
  const SubdomainRom& rom = model.roms[sf.subdomain];
  const int local = partition.subdomains[sf.subdomain].find_local(partition.grid, node);
  sf.g = project_source(rom, local);
  const double bnorm = std::sqrt(rom.mass[local]) / rom.c[local];
  const double captured = (rom.basis_row(local) * bnorm).norm();
  if (captured < 1e-8 * bnorm) log_warning("source direction is not resolved by the reduced basis");
  const SubdomainCoupling& c = model.coupling[sf.subdomain];
  for (std::size_t b = 0; b < rom.face_blocks.size(); ++b) {
    const FaceBlock& fb = rom.face_blocks[b];
    sf.face_flux.push_back(c.face_mass_inv[b] * sf.g.segment(fb.offset, fb.m));
  }
  return sf;
}

std::vector<ReceiverRow> receiver_rows(const CoupledModel& model, const DomainPartition& partition,
                                       const std::vector<int>& global_nodes) {
  std::vector<ReceiverRow> rows;
  for (int node : global_nodes) {
    const std::vector<int> subs = containing_subdomains(partition, node);
    if (subs.empty()) throw ConfigError("receiver outside the grid");
    ReceiverRow rr;
    rr.subdomain = subs.front();
    const SubdomainRom& rom = model.roms[rr.subdomain];
    const int l = partition.subdomains[rr.subdomain].find_local(partition.grid, node);
    const Eigen::RowVectorXd y = rom.basis_row(l) * (rom.c[l] / std::sqrt(rom.mass[l]));
    rr.row.resize(y.size());
    const Eigen::Index p = rom.width();
    for (int j = 0; j < rom.layers(); ++j)
      rr.row.segment(j * p, p) =
          rom.sfrac.g[j].transpose().partialPivLu().solve(y.segment(j * p, p).transpose()).transpose();
    rows.push_back(std::move(rr));
  }
  return rows;
}

void sample_receivers(const std::vector<ReceiverRow>& rows, const CoupledState& state, double* out) {
  for (std::size_t r = 0; r < rows.size(); ++r) out[r] = rows[r].row.dot(state.curr[rows[r].subdomain]);
}

CoupledState initial_state(const CoupledModel& model, const DomainPartition& partition, const Vec& u0,
                           const Vec& v0, double dt) {
  CoupledState s = zero_state(model);
  std::vector<Vec> vel(model.subdomain_count());
  for (int i = 0; i < model.subdomain_count(); ++i) {
    const SubdomainRom& r = model.roms[i];
    const SubdomainDesc& d = partition.subdomains[i];
    Vec w(d.size()), wv(d.size());
    for (int l = 0; l < d.size(); ++l) {
      const double scale = std::sqrt(r.mass[l]) / r.c[l];
      w[l] = scale * u0[d.local_to_global[l]];
      wv[l] = scale * v0[d.local_to_global[l]];
    }
    if (!r.full_basis()) throw ConfigError("initial state needs the full reduced basis");
    const LayerState ls = project_initial_state(w, wv, r.vq, r.sfrac);
    s.curr[i] = ls.u;
    s.prev[i] = ls.du;  // velocity, replaced below
  }
  synchronize_replicas(model, s);
  for (int i = 0; i < model.subdomain_count(); ++i) vel[i] = s.prev[i];
  std::vector<Vec> acc;
  coupled_accel(model, s.curr, acc);
  for (int i = 0; i < model.subdomain_count(); ++i) s.prev[i] = s.curr[i] - dt * vel[i] + 0.5 * dt * dt * acc[i];
  synchronize_replicas(model, s);
  return s;
}

CoupledStepper::CoupledStepper(const CoupledModel& model, double dt, StepperOptions options)
    : model_(model), dt_(dt), options_(options) {
  if (!(dt > 0.0)) throw ConfigError("stepper: dt must be positive");
  const int n = model.subdomain_count();
  flux_.resize(n);
  next_.resize(n);
  for (int i = 0; i < n; ++i) {
    const Eigen::Index k = static_cast<Eigen::Index>(model.roms[i].layers()) * model.roms[i].width();
    flux_[i] = Vec::Zero(k);
    next_[i] = Vec::Zero(k);
  }
  mailbox_.resize(model.links.size());
  for (std::size_t l = 0; l < model.links.size(); ++l)
    for (int side = 0; side < 2; ++side) mailbox_[l][side].payload = Vec::Zero(model.links[l].m);
  counters_.per_link.assign(model.links.size(), {0, 0});
  damping_ = std::exp(-model.sponge_rate * dt);
}

void CoupledStepper::post_messages(const CoupledState& state) {
  const double f = source_value(state.t);
  for_each_index(options_.backend, options_.workers, model_.subdomain_count(), [&](int i) {
    const SubdomainRom& r = model_.roms[i];
    const SubdomainCoupling& c = model_.coupling[i];
    flux_[i] = layer_fluxes(r.sfrac, state.curr[i]);
    for (std::size_t b = 0; b < r.face_blocks.size(); ++b) {
      const int link = c.block_link[b];
      if (link < 0) continue;
      const FaceBlock& fb = r.face_blocks[b];
      FaceMessage& msg = mailbox_[link][c.block_side[b]];
      msg.payload = flux_[i].segment(fb.offset, fb.m);
      if (i == source_.subdomain) msg.payload += f * source_.face_flux[b];
      msg.sender = i;
      msg.face = fb.face;
      msg.link = link;
      msg.step = state.step;
      ++counters_.per_link[link][c.block_side[b]];
    }
  });
}

void CoupledStepper::update_interior(const CoupledState& state) {
  const double f = source_value(state.t);
  const double dt2 = dt_ * dt_;
  for_each_index(options_.backend, options_.workers, model_.subdomain_count(), [&](int i) {
    const SubdomainRom& r = model_.roms[i];
    const Eigen::Index p = r.width();
    const Vec& q = flux_[i];
    Vec& nx = next_[i];
    const Vec& u = state.curr[i];
    const Vec& up = state.prev[i];
    const bool src = i == source_.subdomain;
    for (int j = 1; j < r.layers(); ++j) {
      Vec acc = r.sfrac.gamma_hat[j] * (q.segment(j * p, p) - q.segment((j - 1) * p, p));
      if (src) acc += f * source_.g.segment(j * p, p);
      nx.segment(j * p, p) = 2.0 * u.segment(j * p, p) - up.segment(j * p, p) + dt2 * acc;
    }
  });
}

void CoupledStepper::update_boundaries(const CoupledState& state) {
  for (std::size_t l = 0; l < mailbox_.size(); ++l)
    for (int side = 0; side < 2; ++side) {
      const FaceMessage& msg = mailbox_[l][side];
      if (msg.step != state.step || msg.payload.size() != model_.links[l].m) {
        std::ostringstream os;
        os << "missing face message on link " << l << " side " << side << " at step " << state.step;
        throw ProtocolError(os.str());
      }
    }
  const double f = source_value(state.t);
  const double dt2 = dt_ * dt_;
  for_each_index(options_.backend, options_.workers, static_cast<int>(model_.links.size()), [&](int l) {
    const FaceLink& link = model_.links[l];
    const int olo = model_.roms[link.lo].face_blocks[link.lo_block].offset;
    const int ohi = model_.roms[link.hi].face_blocks[link.hi_block].offset;
    const Vec acc = link.coupling * (mailbox_[l][0].payload + mailbox_[l][1].payload);
    const Vec nx = 2.0 * state.curr[link.lo].segment(olo, link.m) - state.prev[link.lo].segment(olo, link.m) + dt2 * acc;
    next_[link.lo].segment(olo, link.m) = nx;
    next_[link.hi].segment(ohi, link.m) = nx;
  });
  for_each_index(options_.backend, options_.workers, model_.subdomain_count(), [&](int i) {
    const SubdomainRom& r = model_.roms[i];
    const SubdomainCoupling& c = model_.coupling[i];
    for (std::size_t b = 0; b < r.face_blocks.size(); ++b) {
      if (c.block_link[b] >= 0) continue;
      const FaceBlock& fb = r.face_blocks[b];
      Vec flux = flux_[i].segment(fb.offset, fb.m);
      if (i == source_.subdomain) flux += f * source_.face_flux[b];
      const Vec acc = c.face_mass[b] * flux;
      next_[i].segment(fb.offset, fb.m) =
          2.0 * state.curr[i].segment(fb.offset, fb.m) - state.prev[i].segment(fb.offset, fb.m) + dt2 * acc;
    }
  });
}

void CoupledStepper::finish_step(CoupledState& state) {
  const int n = model_.subdomain_count();
  if (damping_ != 1.0) {
    for (int i = 0; i < n; ++i) {
      const SubdomainRom& r = model_.roms[i];
      for (std::size_t b = 0; b < r.face_blocks.size(); ++b) {
        if (model_.coupling[i].block_link[b] >= 0) continue;
        const FaceBlock& fb = r.face_blocks[b];
        next_[i].segment(fb.offset, fb.m) *= damping_;
        state.curr[i].segment(fb.offset, fb.m) *= damping_;
      }
    }
  }
  for (int i = 0; i < n; ++i) {
    std::swap(state.prev[i], state.curr[i]);
    std::swap(state.curr[i], next_[i]);
  }
  state.t += dt_;
  ++state.step;

  counters_.steps = state.step;
  counters_.messages = 0;
  counters_.floats = 0;
  for (std::size_t l = 0; l < counters_.per_link.size(); ++l) {
    const std::int64_t k = counters_.per_link[l][0] + counters_.per_link[l][1];
    counters_.messages += k;
    counters_.floats += k * model_.links[l].m;
  }

  double norm2 = 0.0;
  for (int i = 0; i < n; ++i) norm2 += state.curr[i].squaredNorm();
  if (!std::isfinite(norm2)) throw NumericalError("coupled stepper: non-finite state");
  // The reference level follows the state while the source still injects
  // energy; afterwards growth beyond it means the scheme is unstable.
  if (norm_ref_ == 0.0 || (source_.active() && state.t <= 2.0 * source_.spec.effective_delay())) {
    norm_ref_ = std::max(norm_ref_, norm2);
  } else if (norm2 > 1e12 * norm_ref_) {
    std::ostringstream os;
    os << "coupled stepper unstable at t=" << state.t << " (dt=" << dt_ << ")";
    throw NumericalError(os.str());
  }
}

void CoupledStepper::leapfrog_step(CoupledState& state) {
  post_messages(state);
  update_interior(state);
  update_boundaries(state);
  finish_step(state);
}

}  // namespace sfv
