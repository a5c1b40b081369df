#include "fblab/field.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>

#include <json.hpp>

namespace fblab {

namespace {

constexpr double kBoundsSlack = 1e-9;

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_or_throw(const std::string& path, const char* mode) {
    FilePtr f(std::fopen(path.c_str(), mode));
    if (!f) throw ConfigError("cannot open '" + path + "'");
    return f;
}

} // namespace

ValueField::ValueField(SpaceTimeGrid grid, std::string provenance, std::string problem_hash)
    : grid_(std::move(grid)), provenance_(std::move(provenance)),
      problem_hash_(std::move(problem_hash)) {
    grid_.validate();
    values_.assign(static_cast<std::size_t>(grid_.steps + 1) * grid_.space_size(), 0.0);
}

void ValueField::set_argmin_dim(int k) {
    k_ = k;
    argmin_u_.assign(values_.size() * static_cast<std::size_t>(k), 0.0);
}

std::span<double> ValueField::argmin_at(int ti, std::size_t node) {
    return {argmin_u_.data() + index(ti, node) * static_cast<std::size_t>(k_),
            static_cast<std::size_t>(k_)};
}

std::span<const double> ValueField::argmin_at(int ti, std::size_t node) const {
    return {argmin_u_.data() + index(ti, node) * static_cast<std::size_t>(k_),
            static_cast<std::size_t>(k_)};
}

double ValueField::interp_space(int ti, std::span<const double> x, bool clamp) const {
    const int n = grid_.dim();
    // Per-dimension cell index and weight toward the upper node.
    int cell[8];
    double w[8];
    if (n > 8) throw SolverError("value", "interpolation supports at most 8 dimensions");
    for (int d = 0; d < n; ++d) {
        const std::size_t dd = static_cast<std::size_t>(d);
        const double lo = grid_.x_min[dd];
        const double hi = grid_.x_max[dd];
        const double span = hi - lo;
        double v = x[dd];
        if (v < lo || v > hi) {
            if (!clamp && (v < lo - kBoundsSlack * span || v > hi + kBoundsSlack * span))
                throw InterpolationOutOfBounds(
                    "coordinate " + std::to_string(d + 1) + " = " + std::to_string(v) +
                    " outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
            v = v < lo ? lo : hi;
        }
        const double s = (v - lo) / grid_.dx(d);
        int c = static_cast<int>(s);
        const int top = grid_.x_nodes[dd] - 2;
        if (c > top) c = top;
        if (c < 0) c = 0;
        cell[d] = c;
        w[d] = s - c;
    }
    double acc = 0.0;
    const int corners = 1 << n;
    for (int mask = 0; mask < corners; ++mask) {
        double weight = 1.0;
        std::size_t flat = 0;
        for (int d = 0; d < n; ++d) {
            const int up = (mask >> d) & 1;
            weight *= up ? w[d] : 1.0 - w[d];
            flat = flat * static_cast<std::size_t>(grid_.x_nodes[static_cast<std::size_t>(d)]) +
                   static_cast<std::size_t>(cell[d] + up);
        }
        if (weight != 0.0) acc += weight * at(ti, flat);
    }
    return acc;
}

double ValueField::interp(double t, std::span<const double> x, bool clamp) const {
    const double dt = grid_.dt();
    double s = (t - grid_.t0) / dt;
    if (s < 0.0) s = 0.0;
    if (s > grid_.steps) s = grid_.steps;
    int ti = static_cast<int>(s);
    if (ti > grid_.steps - 1) ti = grid_.steps - 1;
    const double w = s - ti;
    const double lo = interp_space(ti, x, clamp);
    if (w == 0.0) return lo;
    const double hi = interp_space(ti + 1, x, clamp);
    return lo + w * (hi - lo);
}

void ValueField::save(const std::string& base_path, const std::string& value_column) const {
    const int n = grid_.dim();
    {
        nlohmann::json j;
        j["schema"] = 1;
        j["provenance"] = provenance_;
        j["problem_hash"] = problem_hash_;
        j["grid"] = {{"t0", grid_.t0},     {"T", grid_.T},
                     {"steps", grid_.steps}, {"x_min", grid_.x_min},
                     {"x_max", grid_.x_max}, {"x_nodes", grid_.x_nodes}};
        j["k"] = k_;
        std::vector<std::string> cols = {"t"};
        for (int d = 1; d <= n; ++d) cols.push_back("x" + std::to_string(d));
        cols.push_back(value_column);
        for (int c = 1; c <= k_; ++c) cols.push_back("argmin_u" + std::to_string(c));
        j["columns"] = cols;
        std::ofstream out(base_path + ".json");
        if (!out) throw ConfigError("cannot open '" + base_path + ".json'");
        out << j.dump(2) << "\n";
    }

    FilePtr f = open_or_throw(base_path + ".csv", "w");
    std::fputs("t", f.get());
    for (int d = 1; d <= n; ++d) std::fprintf(f.get(), ",x%d", d);
    std::fprintf(f.get(), ",%s", value_column.c_str());
    for (int c = 1; c <= k_; ++c) std::fprintf(f.get(), ",argmin_u%d", c);
    std::fputc('\n', f.get());

    std::vector<double> x(static_cast<std::size_t>(n));
    for (int ti = 0; ti <= grid_.steps; ++ti) {
        const double t = grid_.t_at(ti);
        for (std::size_t node = 0; node < grid_.space_size(); ++node) {
            grid_.coords(node, x);
            std::fprintf(f.get(), "%.17g", t);
            for (int d = 0; d < n; ++d)
                std::fprintf(f.get(), ",%.17g", x[static_cast<std::size_t>(d)]);
            std::fprintf(f.get(), ",%.17g", at(ti, node));
            if (k_ > 0) {
                const auto u = argmin_at(ti, node);
                for (int c = 0; c < k_; ++c) std::fprintf(f.get(), ",%.17g", u[c]);
            }
            std::fputc('\n', f.get());
        }
    }
}

ValueField ValueField::load(const std::string& base_path) {
    nlohmann::json j;
    {
        std::ifstream in(base_path + ".json");
        if (!in) throw ConfigError("cannot open '" + base_path + ".json'");
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("bad field header '" + base_path + ".json': " + e.what());
        }
    }
    try {
        if (j.at("schema").get<int>() != 1)
            throw ConfigError("unsupported field schema in '" + base_path + ".json'");
        SpaceTimeGrid grid;
        const auto& g = j.at("grid");
        grid.t0 = g.at("t0").get<double>();
        grid.T = g.at("T").get<double>();
        grid.steps = g.at("steps").get<int>();
        grid.x_min = g.at("x_min").get<std::vector<double>>();
        grid.x_max = g.at("x_max").get<std::vector<double>>();
        grid.x_nodes = g.at("x_nodes").get<std::vector<int>>();
        ValueField field(std::move(grid), j.at("provenance").get<std::string>(),
                         j.at("problem_hash").get<std::string>());
        const int k = j.at("k").get<int>();
        if (k > 0) field.set_argmin_dim(k);

        std::ifstream in(base_path + ".csv");
        if (!in) throw ConfigError("cannot open '" + base_path + ".csv'");
        std::string line;
        std::getline(in, line); // header
        const int n = field.grid_.dim();
        for (int ti = 0; ti <= field.grid_.steps; ++ti) {
            for (std::size_t node = 0; node < field.grid_.space_size(); ++node) {
                if (!std::getline(in, line))
                    throw ConfigError("field CSV '" + base_path + ".csv' truncated");
                const char* p = line.c_str();
                char* end = nullptr;
                double v = 0.0;
                for (int col = 0; col < 1 + n + 1 + k; ++col) {
                    v = std::strtod(p, &end);
                    if (end == p)
                        throw ConfigError("field CSV '" + base_path + ".csv' has a bad number");
                    if (col == 1 + n) field.at(ti, node) = v;
                    if (col > 1 + n)
                        field.argmin_at(ti, node)[static_cast<std::size_t>(col - n - 2)] = v;
                    p = *end == ',' ? end + 1 : end;
                }
            }
        }
        return field;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("bad field header '" + base_path + ".json': " + e.what());
    }
}

RegularityEstimate estimate_regularity(const ValueField& field, double sub_box) {
    const SpaceTimeGrid& grid = field.grid();
    const int n = grid.dim();
    std::vector<double> xa(static_cast<std::size_t>(n)), xb(static_cast<std::size_t>(n));
    auto inside = [&](std::span<const double> x) {
        if (sub_box <= 0.0) return true;
        for (double v : x)
            if (std::fabs(v) > sub_box + 1e-12) return false;
        return true;
    };

    RegularityEstimate est;
    const std::size_t space = grid.space_size();
    for (int ti = 0; ti <= grid.steps; ++ti) {
        for (std::size_t node = 0; node < space; ++node) {
            grid.coords(node, xa);
            if (!inside(xa)) continue;
            // Spatial neighbors: +1 along each dimension.
            std::vector<int> idx = grid.unflatten(node);
            for (int d = 0; d < n; ++d) {
                if (idx[static_cast<std::size_t>(d)] + 1 >=
                    grid.x_nodes[static_cast<std::size_t>(d)])
                    continue;
                std::vector<int> jdx = idx;
                ++jdx[static_cast<std::size_t>(d)];
                const std::size_t other = grid.flatten(jdx);
                grid.coords(other, xb);
                if (!inside(xb)) continue;
                const double q =
                    std::fabs(field.at(ti, other) - field.at(ti, node)) / grid.dx(d);
                if (q > est.lip_x) est.lip_x = q;
            }
            if (ti < grid.steps) {
                double norm = 0.0;
                for (double v : xa) norm += v * v;
                norm = std::sqrt(norm);
                const double q = std::fabs(field.at(ti + 1, node) - field.at(ti, node)) /
                                 ((1.0 + norm) * std::sqrt(grid.dt()));
                if (q > est.holder_t) est.holder_t = q;
            }
        }
    }
    return est;
}

} // namespace fblab
