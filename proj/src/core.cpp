#include "fblab/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "fblab/rng.hpp"

namespace fblab {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

// --- ControlSet ---

ControlSet ControlSet::single(std::vector<double> u) {
    ControlSet c;
    c.k = static_cast<int>(u.size());
    c.points.push_back(std::move(u));
    return c;
}

ControlSet ControlSet::uniform(const std::vector<double>& lo, const std::vector<double>& hi,
                               const std::vector<int>& counts) {
    if (lo.size() != hi.size() || lo.size() != counts.size() || lo.empty())
        throw ConfigError("control lattice: lo/hi/counts must share a nonzero size");
    ControlSet c;
    c.k = static_cast<int>(lo.size());
    std::size_t total = 1;
    for (int cnt : counts) {
        if (cnt < 1) throw ConfigError("control lattice: counts must be >= 1");
        total *= static_cast<std::size_t>(cnt);
    }
    c.points.reserve(total);
    std::vector<int> idx(lo.size(), 0);
    for (std::size_t p = 0; p < total; ++p) {
        std::vector<double> u(lo.size());
        for (std::size_t i = 0; i < lo.size(); ++i)
            u[i] = counts[i] == 1 ? lo[i]
                                  : lo[i] + (hi[i] - lo[i]) * idx[i] / (counts[i] - 1);
        c.points.push_back(std::move(u));
        for (std::size_t i = lo.size(); i-- > 0;) {
            if (++idx[i] < counts[i]) break;
            idx[i] = 0;
        }
    }
    return c;
}

void ControlSet::validate() const {
    if (points.empty()) throw ConfigError("control lattice must be nonempty");
    for (const auto& u : points) {
        if (static_cast<int>(u.size()) != k)
            throw ConfigError("control lattice point has wrong dimension");
        for (double v : u)
            if (!std::isfinite(v)) throw ConfigError("control lattice point is not finite");
    }
}

// --- Coefficient ---

namespace {

double frozen_y_value(const FrozenBindings& f, double t, std::span<const double> x) {
    return f.y_field->interp(t, x, /*clamp=*/true);
}

double frozen_z_value(const FrozenBindings& f, std::size_t u_index, std::size_t j, double t,
                      std::span<const double> x) {
    if (u_index >= f.z_fields.size())
        throw SolverError("core", "frozen z binding: control index out of range");
    return f.z_fields[u_index][j].interp(t, x, /*clamp=*/true);
}

} // namespace

double Coefficient::eval(double t, std::span<const double> x, double y,
                         std::span<const double> z, std::span<const double> u,
                         std::size_t u_index) const {
    expr::Point p{t, x, y, z, u};
    double y_sub = y;
    std::vector<double> z_sub;
    if (frozen_) {
        if (frozen_->has_y()) {
            y_sub = frozen_y_value(*frozen_, t, x);
            p.y = y_sub;
        }
        if (frozen_->has_z()) {
            z_sub.resize(z.size());
            for (std::size_t j = 0; j < z.size(); ++j)
                z_sub[j] = frozen_z_value(*frozen_, u_index, j, t, x);
            p.z = z_sub;
        }
    }
    return expr_.evaluate(p);
}

void Coefficient::eval_batch(const expr::BatchPoint& p, std::span<const std::size_t> u_index,
                             std::span<double> out, expr::Workspace& ws) const {
    if (!frozen_ || (!frozen_->has_y() && !frozen_->has_z())) {
        expr_.eval_batch(p, out, ws);
        return;
    }
    const std::size_t m = p.m;
    expr::BatchPoint q = p;
    std::vector<double> xbuf(p.x.size());
    auto gather_x = [&](std::size_t i) -> std::span<const double> {
        for (std::size_t dd = 0; dd < p.x.size(); ++dd)
            xbuf[dd] = p.x[dd].data ? p.x[dd].data[i] : p.x[dd].value;
        return xbuf;
    };
    auto t_of = [&](std::size_t i) { return p.t.data ? p.t.data[i] : p.t.value; };
    auto uidx_of = [&](std::size_t i) {
        return u_index.empty() ? std::size_t{0} : u_index[u_index.size() == 1 ? 0 : i];
    };

    std::vector<double> ybuf;
    if (frozen_->has_y() && expr_.uses('y')) {
        ybuf.resize(m);
        for (std::size_t i = 0; i < m; ++i)
            ybuf[i] = frozen_y_value(*frozen_, t_of(i), gather_x(i));
        q.y = expr::Binding::array(ybuf.data());
    }
    std::vector<std::vector<double>> zbuf;
    if (frozen_->has_z() && expr_.uses('z')) {
        zbuf.assign(q.z.size(), std::vector<double>(m));
        for (std::size_t j = 0; j < q.z.size(); ++j) {
            for (std::size_t i = 0; i < m; ++i)
                zbuf[j][i] = frozen_z_value(*frozen_, uidx_of(i), j, t_of(i), gather_x(i));
            q.z[j] = expr::Binding::array(zbuf[j].data());
        }
    }
    expr_.eval_batch(q, out, ws);
}

// --- ProblemSpec ---

bool ProblemSpec::sigma_uses_z() const {
    for (const auto& c : sigma)
        if (c.uses_z()) return true;
    return false;
}

bool ProblemSpec::sigma_uses_y() const {
    for (const auto& c : sigma)
        if (c.uses_y()) return true;
    return false;
}

bool ProblemSpec::forward_coupled() const {
    for (const auto& c : b)
        if (c.uses_y() || c.uses_z()) return true;
    return sigma_uses_y() || sigma_uses_z();
}

bool ProblemSpec::any_uses_u() const {
    for (const auto& c : b)
        if (c.uses_u()) return true;
    for (const auto& c : sigma)
        if (c.uses_u()) return true;
    return g.uses_u() || phi.uses_u();
}

void ProblemSpec::validate() const {
    if (n < 1 || d < 1 || k < 1) throw ConfigError("problem: n, d, k must be >= 1");
    if (!(T > 0.0)) throw ConfigError("problem: T must be positive");
    if (static_cast<int>(b.size()) != n)
        throw ConfigError("problem: b needs exactly n entries");
    if (static_cast<int>(sigma.size()) != n * d)
        throw ConfigError("problem: sigma needs exactly n*d entries");
    if (!(L1 >= 0.0) || !(L2 >= 0.0) || !(L3 >= 0.0) || !std::isfinite(L1) ||
        !std::isfinite(L2) || !std::isfinite(L3))
        throw ConfigError("problem: L1, L2, L3 must be finite and nonnegative");
    if (controls.k != k) throw ConfigError("problem: control lattice dimension != k");
    controls.validate();
    const auto& pe = phi.expression();
    if (pe.uses('t') || pe.uses('y') || pe.uses('z') || pe.uses('u'))
        throw ConfigError("problem: phi may depend on x only");
}

// --- standing assumptions ---

namespace {

void validate_c2(const std::function<double(double)>& C2, double L1) {
    double samples[] = {0.0, 0.5, 1.0, L1, 2.0 * L1 + 1.0, 10.0};
    std::sort(std::begin(samples), std::end(samples));
    double prev = -kInf;
    for (double s : samples) {
        const double v = C2(s);
        if (!(v > 0.0) || !std::isfinite(v))
            throw InvalidConstants("C2 must be positive and finite (C2(" +
                                   std::to_string(s) + ") = " + std::to_string(v) + ")");
        if (v < prev - 1e-12 * std::max(1.0, std::fabs(prev)))
            throw InvalidConstants("C2 must be nondecreasing");
        prev = std::max(prev, v);
    }
}

} // namespace

AssumptionReport check_standing_assumptions(const ProblemSpec& spec,
                                            const AssumptionConstants& constants) {
    validate_c2(constants.C2, spec.L1);
    if (!(constants.C4 > 0.0) || !std::isfinite(constants.C4))
        throw InvalidConstants("C4 must be positive and finite");

    AssumptionReport r;
    r.constants_source = constants.source;
    r.c1 = std::max(spec.L2, spec.L3);
    const double time_factor = 1.0 + spec.T * spec.T;
    const double c2_l1 = constants.C2(spec.L1);

    if (r.c1 == 0.0) {
        r.Lambda = 0.0;
        r.L_bar = std::max(spec.L1, std::sqrt(c2_l1));
        r.Lambda_bar = 0.0;
    } else {
        r.Lambda = 8.0 * c2_l1 * time_factor * r.c1 * r.c1;
        if (r.Lambda < 1.0) {
            r.L_bar = std::max(spec.L1, std::sqrt(c2_l1) / (1.0 - std::sqrt(r.Lambda)));
            r.Lambda_bar = 8.0 * constants.C2(r.L_bar) * time_factor * r.c1 * r.c1;
        } else {
            r.L_bar = kInf;
            r.Lambda_bar = kInf;
        }
    }
    r.smallness_ok = r.Lambda < 1.0 && r.Lambda_bar < 1.0;

    if (constants.L_W)
        r.L_W = *constants.L_W;
    else
        r.L_W = r.Lambda < 1.0 ? std::sqrt(c2_l1) / (1.0 - std::sqrt(r.Lambda)) : kInf;

    const bool l3_small = spec.L3 == 0.0 || spec.L3 * r.L_W < 1.0;
    const double l3_fourth = spec.L3 * spec.L3 * spec.L3 * spec.L3;
    r.l3_ok = l3_small && 8.0 * constants.C4 * l3_fourth < 1.0;
    return r;
}

void Gate::require(const std::string& who) const {
    if (report.smallness_ok || override_gate) return;
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "smallness gate fails (Lambda = %g, Lambda_bar = %g); "
                  "set the gate override to run anyway",
                  report.Lambda, report.Lambda_bar);
    throw GateRefused(who + ": " + buf);
}

// --- monotonicity ---

void MonotonicityConfig::validate(int n) const {
    if (static_cast<int>(G.size()) != n)
        throw ConfigError("monotonicity: G must have the state dimension");
    double norm = 0.0;
    for (double v : G) {
        if (!std::isfinite(v)) throw ConfigError("monotonicity: G must be finite");
        norm += v * v;
    }
    if (norm == 0.0) throw ConfigError("monotonicity: G must be nonzero");
    if (!(beta1 >= 0.0) || !(beta2 >= 0.0) || !(mu1 >= 0.0))
        throw ConfigError("monotonicity: beta1, beta2, mu1 must be nonnegative");
}

bool MonotonicityConfig::admissible(int n) const {
    if (beta1 + beta2 <= 0.0) return false;
    if (beta2 + mu1 <= 0.0) return false;
    if (n > 1 && beta2 <= 0.0) return false;
    return true;
}

MonotonicityReport check_monotonicity_sampled(const ProblemSpec& spec,
                                              const MonotonicityConfig& cfg, long probe_pairs,
                                              double box_radius, std::uint64_t seed,
                                              double tol) {
    spec.validate();
    cfg.validate(spec.n);

    MonotonicityReport rep;
    rep.certificate_admissible = cfg.admissible(spec.n);
    rep.worst_violation = -kInf;
    rep.probes = probe_pairs;

    const std::size_t n = static_cast<std::size_t>(spec.n);
    const std::size_t d = static_cast<std::size_t>(spec.d);
    double g_norm2 = 0.0;
    for (double v : cfg.G) g_norm2 += v * v;

    std::vector<double> xa(n), xb(n), za(d), zb(d);
    const std::uint64_t base = 1 + seed * 0x9E3779B9ULL;

    for (long i = 0; i < probe_pairs; ++i) {
        const std::uint64_t w = base + static_cast<std::uint64_t>(i);
        unsigned dim = 0;
        auto coord = [&] { return rng::weyl_coordinate(w, dim++); };

        const double t = spec.T * coord();
        for (std::size_t j = 0; j < n; ++j) xa[j] = box_radius * (2.0 * coord() - 1.0);
        const double ya = box_radius * (2.0 * coord() - 1.0);
        for (std::size_t j = 0; j < d; ++j) za[j] = box_radius * (2.0 * coord() - 1.0);
        for (std::size_t j = 0; j < n; ++j) xb[j] = box_radius * (2.0 * coord() - 1.0);
        const double yb = box_radius * (2.0 * coord() - 1.0);
        for (std::size_t j = 0; j < d; ++j) zb[j] = box_radius * (2.0 * coord() - 1.0);
        const std::size_t ui = static_cast<std::size_t>(i) % spec.controls.size();
        const auto u = spec.controls.at(ui);

        double gx_hat = 0.0;
        for (std::size_t j = 0; j < n; ++j) gx_hat += cfg.G[j] * (xa[j] - xb[j]);
        const double y_hat = ya - yb;
        double z_hat2 = 0.0;
        for (std::size_t j = 0; j < d; ++j) z_hat2 += (za[j] - zb[j]) * (za[j] - zb[j]);

        double inner = 0.0;
        bool skipped = false;
        try {
            const double ga = spec.g.eval(t, xa, ya, za, u, ui);
            const double gb = spec.g.eval(t, xb, yb, zb, u, ui);
            inner += -(ga - gb) * gx_hat;
            double gb_dot = 0.0;
            for (std::size_t j = 0; j < n; ++j)
                gb_dot += cfg.G[j] * (spec.b[j].eval(t, xa, ya, za, u, ui) -
                                      spec.b[j].eval(t, xb, yb, zb, u, ui));
            inner += gb_dot * y_hat;
            for (std::size_t col = 0; col < d; ++col) {
                double gs = 0.0;
                for (std::size_t row = 0; row < n; ++row)
                    gs += cfg.G[row] *
                          (spec.sigma_at(static_cast<int>(row), static_cast<int>(col))
                               .eval(t, xa, ya, za, u, ui) -
                           spec.sigma_at(static_cast<int>(row), static_cast<int>(col))
                               .eval(t, xb, yb, zb, u, ui));
                inner += gs * (za[col] - zb[col]);
            }
        } catch (const DomainError&) {
            skipped = true; // probe outside a coefficient's domain; not a verdict
        }
        if (skipped) continue;

        const double excess1 = inner + cfg.beta1 * gx_hat * gx_hat +
                               cfg.beta2 * g_norm2 * (y_hat * y_hat + z_hat2);

        double excess2;
        try {
            const double pa = spec.phi.eval(0.0, xa, 0.0, za, u);
            const double pb = spec.phi.eval(0.0, xb, 0.0, zb, u);
            excess2 = cfg.mu1 * gx_hat * gx_hat - (pa - pb) * gx_hat;
        } catch (const DomainError&) {
            continue;
        }

        const double excess = std::max(excess1, excess2);
        if (excess > rep.worst_violation) rep.worst_violation = excess;
        if (excess > tol) ++rep.violations;
    }

    if (rep.worst_violation == -kInf) rep.worst_violation = 0.0;
    rep.ok = rep.violations == 0;
    return rep;
}

// --- Lipschitz / growth probing ---

namespace {

double norm2(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

} // namespace

LipschitzProbeReport probe_lipschitz(const ProblemSpec& spec, long probe_pairs,
                                     double box_radius, std::uint64_t seed) {
    spec.validate();
    LipschitzProbeReport rep;
    const std::size_t n = static_cast<std::size_t>(spec.n);
    const std::size_t d = static_cast<std::size_t>(spec.d);

    std::vector<double> x0(n), x1(n), z0(d), z1(d);
    const std::uint64_t base = 1 + seed * 0x9E3779B9ULL;
    const double growth_l = std::max({spec.L1, spec.L2, spec.L3});
    double origin_max = 0.0;
    {
        std::vector<double> zero_x(n, 0.0), zero_z(d, 0.0);
        for (std::size_t ui = 0; ui < spec.controls.size(); ++ui) {
            const auto u = spec.controls.at(ui);
            for (int s = 0; s <= 4; ++s) {
                const double t = spec.T * s / 4.0;
                try {
                    for (std::size_t j = 0; j < n; ++j)
                        origin_max = std::max(
                            origin_max, std::fabs(spec.b[j].eval(t, zero_x, 0.0, zero_z, u, ui)));
                    for (std::size_t j = 0; j < n * d; ++j)
                        origin_max = std::max(
                            origin_max, std::fabs(spec.sigma[j].eval(t, zero_x, 0.0, zero_z, u, ui)));
                    origin_max =
                        std::max(origin_max, std::fabs(spec.g.eval(t, zero_x, 0.0, zero_z, u, ui)));
                    origin_max = std::max(origin_max, std::fabs(spec.phi.eval(0.0, zero_x, 0.0,
                                                                              zero_z, u, ui)));
                } catch (const DomainError&) {
                }
            }
        }
    }
    const double growth_bound = growth_l + origin_max;

    long domain_skips = 0;
    for (long i = 0; i < probe_pairs; ++i) {
        const std::uint64_t w = base + static_cast<std::uint64_t>(i);
        unsigned dim = 0;
        auto coord = [&] { return rng::weyl_coordinate(w, dim++); };

        const double t = spec.T * coord();
        for (std::size_t j = 0; j < n; ++j) x0[j] = box_radius * (2.0 * coord() - 1.0);
        const double y0 = box_radius * (2.0 * coord() - 1.0);
        for (std::size_t j = 0; j < d; ++j) z0[j] = box_radius * (2.0 * coord() - 1.0);
        for (std::size_t j = 0; j < n; ++j) x1[j] = box_radius * (2.0 * coord() - 1.0);
        const double y1 = box_radius * (2.0 * coord() - 1.0);
        for (std::size_t j = 0; j < d; ++j) z1[j] = box_radius * (2.0 * coord() - 1.0);
        const std::size_t ui = static_cast<std::size_t>(i) % spec.controls.size();
        const auto u = spec.controls.at(ui);

        std::vector<double> dx(n), dz(d);
        for (std::size_t j = 0; j < n; ++j) dx[j] = x1[j] - x0[j];
        for (std::size_t j = 0; j < d; ++j) dz[j] = z1[j] - z0[j];
        const double nx = norm2(dx);
        const double ny = std::fabs(y1 - y0);
        const double nz = norm2(dz);

        try {
            // Vary x only.
            if (nx > 1e-12) {
                for (std::size_t j = 0; j < n; ++j) {
                    rep.b_x = std::max(rep.b_x, std::fabs(spec.b[j].eval(t, x1, y0, z0, u, ui) -
                                                          spec.b[j].eval(t, x0, y0, z0, u, ui)) /
                                                    nx);
                }
                for (std::size_t j = 0; j < n * d; ++j)
                    rep.sigma_x =
                        std::max(rep.sigma_x, std::fabs(spec.sigma[j].eval(t, x1, y0, z0, u, ui) -
                                                        spec.sigma[j].eval(t, x0, y0, z0, u, ui)) /
                                                  nx);
                rep.phi_x = std::max(rep.phi_x, std::fabs(spec.phi.eval(0.0, x1, y0, z0, u, ui) -
                                                          spec.phi.eval(0.0, x0, y0, z0, u, ui)) /
                                                    nx);
            }
            // Vary (y, z) jointly for b; y only / z only for sigma.
            if (ny + nz > 1e-12)
                for (std::size_t j = 0; j < n; ++j)
                    rep.b_yz = std::max(rep.b_yz, std::fabs(spec.b[j].eval(t, x0, y1, z1, u, ui) -
                                                            spec.b[j].eval(t, x0, y0, z0, u, ui)) /
                                                      (ny + nz));
            if (ny > 1e-12)
                for (std::size_t j = 0; j < n * d; ++j)
                    rep.sigma_y =
                        std::max(rep.sigma_y, std::fabs(spec.sigma[j].eval(t, x0, y1, z0, u, ui) -
                                                        spec.sigma[j].eval(t, x0, y0, z0, u, ui)) /
                                                  ny);
            if (nz > 1e-12)
                for (std::size_t j = 0; j < n * d; ++j)
                    rep.sigma_z =
                        std::max(rep.sigma_z, std::fabs(spec.sigma[j].eval(t, x0, y0, z1, u, ui) -
                                                        spec.sigma[j].eval(t, x0, y0, z0, u, ui)) /
                                                  nz);
            // g is Lipschitz in (x, y, z) jointly with constant L1.
            if (nx + ny + nz > 1e-12)
                rep.g_xyz = std::max(rep.g_xyz, std::fabs(spec.g.eval(t, x1, y1, z1, u, ui) -
                                                          spec.g.eval(t, x0, y0, z0, u, ui)) /
                                                    (nx + ny + nz));
            // Growth against L (1 + |x| + |y| + |z|).
            const double denom = growth_bound * (1.0 + norm2(x0) + std::fabs(y0) + norm2(z0));
            if (denom > 0.0) {
                double worst = std::fabs(spec.g.eval(t, x0, y0, z0, u, ui));
                for (std::size_t j = 0; j < n; ++j)
                    worst = std::max(worst, std::fabs(spec.b[j].eval(t, x0, y0, z0, u, ui)));
                for (std::size_t j = 0; j < n * d; ++j)
                    worst = std::max(worst, std::fabs(spec.sigma[j].eval(t, x0, y0, z0, u, ui)));
                rep.growth_ratio = std::max(rep.growth_ratio, worst / denom);
            }
        } catch (const DomainError&) {
            ++domain_skips;
        }
    }

    auto warn = [&](double observed, double declared, const char* what) {
        if (observed > declared + 1e-9 * (1.0 + declared)) {
            char buf[160];
            std::snprintf(buf, sizeof(buf), "%s: observed quotient %g exceeds declared %g", what,
                          observed, declared);
            rep.warnings.emplace_back(buf);
        }
    };
    warn(rep.b_x, spec.L1, "b in x (L1)");
    warn(rep.b_yz, spec.L2, "b in (y,z) (L2)");
    warn(rep.sigma_x, spec.L1, "sigma in x (L1)");
    warn(rep.sigma_y, spec.L2, "sigma in y (L2)");
    warn(rep.sigma_z, spec.L3, "sigma in z (L3)");
    warn(rep.g_xyz, spec.L1, "g in (x,y,z) (L1)");
    warn(rep.phi_x, spec.L1, "phi in x (L1)");
    warn(rep.growth_ratio, 1.0, "linear growth envelope");
    if (domain_skips > probe_pairs / 2)
        rep.warnings.emplace_back("more than half of the probes hit coefficient domain errors");
    return rep;
}

// --- hashing ---

namespace {

void fnv_bytes(std::uint64_t& h, const void* data, std::size_t len) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
}

void fnv_string(std::uint64_t& h, const std::string& s) { fnv_bytes(h, s.data(), s.size()); }

void fnv_double(std::uint64_t& h, double v) { fnv_bytes(h, &v, sizeof(v)); }

void fnv_field(std::uint64_t& h, const ValueField& f) {
    fnv_string(h, f.provenance());
    fnv_string(h, f.problem_hash());
    for (double v : f.raw_values()) fnv_double(h, v);
}

void fnv_coefficient(std::uint64_t& h, const Coefficient& c) {
    fnv_string(h, c.expression().print());
    if (c.frozen()) {
        if (c.frozen()->has_y()) {
            fnv_string(h, "|frozen_y|");
            fnv_field(h, *c.frozen()->y_field);
        }
        if (c.frozen()->has_z()) {
            fnv_string(h, "|frozen_z|");
            for (const auto& per_control : c.frozen()->z_fields)
                for (const auto& f : per_control) fnv_field(h, f);
        }
    }
}

} // namespace

std::string problem_hash(const ProblemSpec& spec) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    fnv_double(h, spec.n);
    fnv_double(h, spec.d);
    fnv_double(h, spec.k);
    fnv_double(h, spec.T);
    for (const auto& c : spec.b) fnv_coefficient(h, c);
    for (const auto& c : spec.sigma) fnv_coefficient(h, c);
    fnv_coefficient(h, spec.g);
    fnv_coefficient(h, spec.phi);
    fnv_double(h, spec.L1);
    fnv_double(h, spec.L2);
    fnv_double(h, spec.L3);
    for (const auto& u : spec.controls.points)
        for (double v : u) fnv_double(h, v);
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

} // namespace fblab
