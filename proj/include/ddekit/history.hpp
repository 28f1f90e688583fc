#pragma once

#include <algorithm>
#include <span>
#include <vector>

#include "ddekit/errors.hpp"

namespace ddekit {

/// State on t <= t0, the DDE analogue of an initial condition. Either a
/// constant vector or a tabulated grid with linear interpolation; the
/// derivative is zero for the constant kind and the segment slope otherwise.
/// Evaluation outside a table is clamped to the nearest endpoint.
class HistoryFunction {
public:
    enum class Kind { constant, tabulated };

    static HistoryFunction constant(std::vector<double> value) {
        HistoryFunction h;
        h.kind_ = Kind::constant;
        h.value_ = std::move(value);
        h.dim_ = static_cast<int>(h.value_.size());
        if (h.dim_ == 0) throw config_error("constant history needs at least one coordinate");
        return h;
    }

    /// `times` strictly increasing; `values` is n_times x dim row-major.
    static HistoryFunction tabulated(std::vector<double> times,
                                     std::vector<double> values, int dim) {
        if (dim < 1) throw config_error("tabulated history: dim must be >= 1");
        if (times.size() < 2) throw config_error("tabulated history needs >= 2 knots");
        if (values.size() != times.size() * static_cast<std::size_t>(dim))
            throw config_error("tabulated history: values size mismatch");
        for (std::size_t i = 0; i + 1 < times.size(); ++i)
            if (!(times[i] < times[i + 1]))
                throw config_error("tabulated history: times must be strictly increasing");
        HistoryFunction h;
        h.kind_ = Kind::tabulated;
        h.times_ = std::move(times);
        h.table_ = std::move(values);
        h.dim_ = dim;
        return h;
    }

    Kind kind() const { return kind_; }
    int dim() const { return dim_; }

    void eval(double t, std::span<double> out) const {
        if (kind_ == Kind::constant) {
            std::copy(value_.begin(), value_.end(), out.begin());
            return;
        }
        const auto [seg, s] = locate(t);
        if (s <= 0.0) {
            row(seg, out);
        } else {
            const double* a = table_.data() + static_cast<std::size_t>(seg) * dim_;
            const double* b = a + dim_;
            for (int i = 0; i < dim_; ++i) out[i] = a[i] + s * (b[i] - a[i]);
        }
    }

    std::vector<double> eval(double t) const {
        std::vector<double> out(static_cast<std::size_t>(dim_));
        eval(t, out);
        return out;
    }

    void derivative(double t, std::span<double> out) const {
        if (kind_ == Kind::constant) {
            std::fill(out.begin(), out.end(), 0.0);
            return;
        }
        if (t < times_.front() || t > times_.back()) {
            std::fill(out.begin(), out.end(), 0.0); // clamped region
            return;
        }
        auto [seg, s] = locate(t);
        (void)s;
        seg = std::min(seg, times_.size() - 2); // t == last knot: last segment slope
        const double h = times_[seg + 1] - times_[seg];
        const double* a = table_.data() + static_cast<std::size_t>(seg) * dim_;
        const double* b = a + dim_;
        for (int i = 0; i < dim_; ++i) out[i] = (b[i] - a[i]) / h;
    }

    std::vector<double> derivative(double t) const {
        std::vector<double> out(static_cast<std::size_t>(dim_));
        derivative(t, out);
        return out;
    }

private:
    HistoryFunction() = default;

    void row(std::size_t i, std::span<double> out) const {
        const double* p = table_.data() + i * static_cast<std::size_t>(dim_);
        std::copy(p, p + dim_, out.begin());
    }

    // Returns (segment index, normalized offset in [0,1]); clamps outside the
    // table to the nearest endpoint with s == 0.
    std::pair<std::size_t, double> locate(double t) const {
        if (t <= times_.front()) return {0, 0.0};
        if (t >= times_.back()) return {times_.size() - 1, 0.0};
        const auto it = std::upper_bound(times_.begin(), times_.end(), t);
        const std::size_t seg = static_cast<std::size_t>(it - times_.begin()) - 1;
        const double s = (t - times_[seg]) / (times_[seg + 1] - times_[seg]);
        return {seg, s};
    }

    Kind kind_ = Kind::constant;
    int dim_ = 0;
    std::vector<double> value_;
    std::vector<double> times_;
    std::vector<double> table_;
};

} // namespace ddekit
