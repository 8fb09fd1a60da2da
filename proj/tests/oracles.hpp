// Independent reference computations used by the unit and acceptance suites.
// Nothing here calls into the code paths it is used to check.
#ifndef BIOTUNE_TESTS_ORACLES_HPP
#define BIOTUNE_TESTS_ORACLES_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <stdexcept>
#include <vector>

#include <biotune/genome.hpp>

namespace oracle {

    /// Straight-line decode on std::vector: mask, weight, product.
    inline std::vector<double> eta(const std::vector<double>& genes, biotune::WeightFunction f)
    {
        const std::size_t blocks = genes.size() - 1;
        const double eps = genes.back();
        double top = genes[0];
        for (std::size_t b = 1; b < blocks; ++b)
            top = genes[b] > top ? genes[b] : top;

        std::vector<double> out(blocks);
        for (std::size_t b = 0; b < blocks; ++b) {
            const double s = genes[b] > eps ? 1.0 : 0.0;
            double w = 0.0;
            switch (f) {
            case biotune::WeightFunction::Discriminative:
                w = 1.0;
                break;
            case biotune::WeightFunction::Scaled:
                w = top > 0.0 ? genes[b] / top : 0.0;
                break;
            case biotune::WeightFunction::Normalized:
                w = top > eps ? std::max(0.0, (genes[b] - eps) / (top - eps)) : 0.0;
                break;
            case biotune::WeightFunction::Exponential:
                w = std::pow(10.0, 2.0 * (genes[b] - 0.5));
                break;
            }
            out[b] = s * w;
        }
        return out;
    }

    /// Exhaustive sweep of the genome box at the given resolution.
    struct GridOptimum {
        biotune::Genome genome;
        double fitness = 1e300;
        std::size_t evaluations = 0;
    };

    inline GridOptimum grid_search(const std::function<double(const biotune::Genome&)>& f, Eigen::Index num_blocks, double resolution)
    {
        const auto steps = static_cast<std::size_t>(std::lround(1.0 / resolution));
        const auto genes = static_cast<std::size_t>(num_blocks + 1);
        std::vector<std::size_t> idx(genes, 0);
        biotune::Genome g(num_blocks + 1);
        GridOptimum best;
        while (true) {
            for (std::size_t i = 0; i < genes; ++i)
                g(static_cast<Eigen::Index>(i)) = static_cast<double>(idx[i]) / static_cast<double>(steps);
            const double v = f(g);
            ++best.evaluations;
            if (v < best.fitness) {
                best.fitness = v;
                best.genome = g;
            }
            std::size_t k = 0;
            while (k < genes && ++idx[k] > steps)
                idx[k++] = 0;
            if (k == genes)
                break;
        }
        return best;
    }

    /// Random source replaying a fixed list of uniforms; symmetric() = 2u - 1
    /// and index(n) = floor(u n), matching biotune::Rng.
    class ScriptedRng {
    public:
        ScriptedRng(std::initializer_list<double> values) : _values(values) {}

        double uniform()
        {
            if (_values.empty())
                throw std::logic_error("ScriptedRng exhausted");
            const double v = _values.front();
            _values.pop_front();
            return v;
        }
        double symmetric() { return 2.0 * uniform() - 1.0; }
        std::size_t index(std::size_t n) { return std::min(n - 1, static_cast<std::size_t>(uniform() * static_cast<double>(n))); }
        std::size_t remaining() const { return _values.size(); }

    private:
        std::deque<double> _values;
    };

    /// Central finite-difference gradient.
    inline Eigen::VectorXd numeric_gradient(const std::function<double(const Eigen::VectorXd&)>& f, Eigen::VectorXd x, double h = 1e-6)
    {
        Eigen::VectorXd g(x.size());
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            const double keep = x(i);
            x(i) = keep + h;
            const double up = f(x);
            x(i) = keep - h;
            const double down = f(x);
            x(i) = keep;
            g(i) = (up - down) / (2.0 * h);
        }
        return g;
    }

} // namespace oracle

#endif
