#pragma once

#include "scoreag/graph.hpp"
#include "scoreag/models.hpp"
#include "scoreag/tensor.hpp"
#include "scoreag/vpsde.hpp"

namespace scoreag {

/// A time-dependent (approximate) score of the VP marginals. Implementations
/// must provide the graph form so guidance can differentiate through it; the
/// plain evaluation defaults to reading the graph output, which keeps the two
/// paths bit-identical for networks. Class index 0 means unconditional.
class ScoreFunction {
public:
    virtual ~ScoreFunction() = default;
    virtual int64_t dim() const = 0;
    virtual const NoiseSchedule& schedule() const = 0;
    /// x is a (1,d) node; returns a (1,d) node.
    virtual NodeRef build(Graph& g, NodeRef x, double t, int y) const = 0;
    /// x is (d,) or (1,d); result matches x's shape.
    virtual Tensor score(const Tensor& x, double t, int y) const;
};

/// Analytic score of N(0, I) data under VP: s(x,t) = -x for all t.
class GaussianScore final : public ScoreFunction {
public:
    GaussianScore(int64_t dim, NoiseSchedule s) : dim_(dim), sched_(s) {}
    int64_t dim() const override { return dim_; }
    const NoiseSchedule& schedule() const override { return sched_; }
    NodeRef build(Graph& g, NodeRef x, double t, int y) const override;
    Tensor score(const Tensor& x, double t, int y) const override;

private:
    int64_t dim_;
    NoiseSchedule sched_;
};

/// Analytic score of a point mass at c: marginal N(alpha(t)c, sigma2(t) I).
class PointMassScore final : public ScoreFunction {
public:
    PointMassScore(Tensor center, NoiseSchedule s) : c_(std::move(center)), sched_(s) {}
    int64_t dim() const override { return c_.numel(); }
    const NoiseSchedule& schedule() const override { return sched_; }
    NodeRef build(Graph& g, NodeRef x, double t, int y) const override;
    Tensor score(const Tensor& x, double t, int y) const override;

private:
    Tensor c_;
    NoiseSchedule sched_;
};

class ZeroScore final : public ScoreFunction {
public:
    ZeroScore(int64_t dim, NoiseSchedule s) : dim_(dim), sched_(s) {}
    int64_t dim() const override { return dim_; }
    const NoiseSchedule& schedule() const override { return sched_; }
    NodeRef build(Graph& g, NodeRef x, double t, int y) const override;
    Tensor score(const Tensor& x, double t, int y) const override;

private:
    int64_t dim_;
    NoiseSchedule sched_;
};

/// Trained score network through the selected weight set.
class NetScore final : public ScoreFunction {
public:
    NetScore(const ScoreModel& m, WeightSet ws) : model_(&m), ws_(ws) {}
    int64_t dim() const override { return model_->cfg.input_dim; }
    const NoiseSchedule& schedule() const override { return model_->schedule; }
    NodeRef build(Graph& g, NodeRef x, double t, int y) const override;
    const ScoreModel& model() const { return *model_; }
    WeightSet weight_set() const { return ws_; }

private:
    const ScoreModel* model_;
    WeightSet ws_;
};

} // namespace scoreag
