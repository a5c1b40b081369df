#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fblab/expr.hpp"
#include "fblab/field.hpp"

namespace fblab {

/// Finite lattice of admissible controls (models a compact control set).
struct ControlSet {
    int k = 1;
    std::vector<std::vector<double>> points; // each of size k

    static ControlSet single(std::vector<double> u);
    static ControlSet uniform(const std::vector<double>& lo, const std::vector<double>& hi,
                              const std::vector<int>& counts);

    std::size_t size() const { return points.size(); }
    std::span<const double> at(std::size_t i) const { return points[i]; }
    void validate() const;
};

/// Optional substitution of the y and z slots of a coefficient by sampled
/// fields: y <- Y(t, x), z_j <- Z[control][j](t, x). This is how auxiliary
/// problems with coefficients frozen along a candidate field are built
/// without leaving the expression representation.
struct FrozenBindings {
    std::shared_ptr<const ValueField> y_field;
    // Outer index: control lattice index; inner: z component. Empty = keep z.
    std::vector<std::vector<ValueField>> z_fields;

    bool has_y() const { return y_field != nullptr; }
    bool has_z() const { return !z_fields.empty(); }
};

class Coefficient {
public:
    Coefficient() = default;
    explicit Coefficient(expr::Expression e) : expr_(std::move(e)) {}
    Coefficient(expr::Expression e, std::shared_ptr<const FrozenBindings> frozen)
        : expr_(std::move(e)), frozen_(std::move(frozen)) {}

    const expr::Expression& expression() const { return expr_; }
    const std::shared_ptr<const FrozenBindings>& frozen() const { return frozen_; }

    /// Effective dependence after substitution (a frozen slot reads (t, x)).
    bool uses_y() const { return expr_.uses('y') && !(frozen_ && frozen_->has_y()); }
    bool uses_z() const { return expr_.uses('z') && !(frozen_ && frozen_->has_z()); }
    bool uses_u() const { return expr_.uses('u'); }
    bool uses_x() const { return expr_.uses('x') || (frozen_ && (frozen_->has_y() || frozen_->has_z()) && (expr_.uses('y') || expr_.uses('z'))); }

    double eval(double t, std::span<const double> x, double y, std::span<const double> z,
                std::span<const double> u, std::size_t u_index = 0) const;

    /// Batch evaluation over m points. x/z/u bindings as in expr::BatchPoint;
    /// u_index supplies the per-point control lattice index needed to look up
    /// frozen z fields (scalar broadcast when all points share one control).
    void eval_batch(const expr::BatchPoint& p, std::span<const std::size_t> u_index,
                    std::span<double> out, expr::Workspace& ws) const;

private:
    expr::Expression expr_;
    std::shared_ptr<const FrozenBindings> frozen_;
};

/// Full problem statement: forward drift/diffusion b, sigma, driver g,
/// terminal map phi, declared Lipschitz constants and the control lattice.
struct ProblemSpec {
    std::string name;
    int n = 1; // state dimension
    int d = 1; // Brownian dimension
    int k = 1; // control dimension
    double T = 1.0;
    std::vector<Coefficient> b;     // n entries
    std::vector<Coefficient> sigma; // n*d entries, row-major
    Coefficient g;
    Coefficient phi; // depends on x only
    double L1 = 1.0;
    double L2 = 0.0;
    double L3 = 0.0;
    ControlSet controls;
    std::string hash; // canonical content hash, set by the loader

    const Coefficient& sigma_at(int i, int j) const {
        return sigma[static_cast<std::size_t>(i * d + j)];
    }

    bool sigma_uses_z() const;
    bool sigma_uses_y() const;
    bool forward_coupled() const;  // b or sigma reads y or z
    bool any_uses_u() const;
    bool control_free() const { return !any_uses_u() || controls.size() == 1; }

    void validate() const;
    expr::Dims dims() const { return {n, d, k}; }
};

/// Opaque constants of the well-posedness a-priori bounds. C2 is a positive
/// nondecreasing map of the Lipschitz constant; the nominal default pins both
/// to 1 so gate arithmetic stays inspectable.
struct AssumptionConstants {
    std::function<double(double)> C2 = [](double) { return 1.0; };
    double C4 = 1.0;
    std::string source = "nominal";
    /// Override for the value-field Lipschitz constant; when absent the
    /// a-priori formula sqrt(C2(L1)) / (1 - sqrt(Lambda)) is used.
    std::optional<double> L_W;
};

struct AssumptionReport {
    double c1 = 0.0;
    double Lambda = 0.0;
    double L_bar = 0.0;
    double Lambda_bar = 0.0;
    double L_W = 0.0;
    bool smallness_ok = false;
    bool l3_ok = false;
    std::string constants_source;
};

/// Evaluates the smallness conditions:
///   c1        = max(L2, L3)
///   Lambda    = 8 C2(L1) (1 + T^2) c1^2
///   L_bar     = max(L1, sqrt(C2(L1)) / (1 - sqrt(Lambda)))
///   Lambda_bar= 8 C2(L_bar) (1 + T^2) c1^2
///   smallness_ok  iff  Lambda < 1 and Lambda_bar < 1
///   l3_ok         iff  L3 * L_W < 1 and 8 C4 L3^4 < 1
/// Throws InvalidConstants when C2 samples nonpositive or decreasing.
AssumptionReport check_standing_assumptions(const ProblemSpec& spec,
                                            const AssumptionConstants& constants);

/// Solver admission gate. Solvers call require(); a failed gate throws
/// GateRefused unless the caller explicitly set override_gate.
struct Gate {
    AssumptionReport report;
    bool override_gate = false;

    void require(const std::string& who) const;
};

/// Monotonicity certificate (G row vector, beta1/beta2/mu1 weights).
struct MonotonicityConfig {
    std::vector<double> G; // size n, nonzero
    double beta1 = 0.0;
    double beta2 = 0.0;
    double mu1 = 0.0;

    void validate(int n) const; // G shape/finite/nonzero; betas nonnegative

    /// True when the weights satisfy the positivity pattern the uniqueness
    /// theory asks for (beta1+beta2 > 0, beta2+mu1 > 0, beta2 > 0 if n > 1).
    bool admissible(int n) const;
};

struct MonotonicityReport {
    bool ok = false;
    double worst_violation = 0.0; // max signed excess over both conditions
    long violations = 0;
    long probes = 0;
    bool certificate_admissible = false;
};

/// Samples probe pairs quasi-randomly in a box of the given radius and
/// evaluates both monotonicity conditions; a probe violates when its signed
/// excess exceeds tol (default 1e-10).
MonotonicityReport check_monotonicity_sampled(const ProblemSpec& spec,
                                              const MonotonicityConfig& cfg,
                                              long probe_pairs = 10000,
                                              double box_radius = 1.0,
                                              std::uint64_t seed = 1,
                                              double tol = 1e-10);

struct LipschitzProbeReport {
    // Worst observed difference quotients.
    double b_x = 0.0, b_yz = 0.0;
    double sigma_x = 0.0, sigma_y = 0.0, sigma_z = 0.0;
    double g_xyz = 0.0, phi_x = 0.0;
    double growth_ratio = 0.0; // worst |value| / (L (1 + |x| + |y| + |z|))
    std::vector<std::string> warnings;
};

/// Quasi-random sampling of difference quotients against the declared
/// constants. Exceedances are reported as warnings, never as errors.
LipschitzProbeReport probe_lipschitz(const ProblemSpec& spec, long probe_pairs = 10000,
                                     double box_radius = 1.0, std::uint64_t seed = 1);

/// FNV-1a over a canonical rendering of the problem content.
std::string problem_hash(const ProblemSpec& spec);

} // namespace fblab
