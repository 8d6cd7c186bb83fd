#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace hiersfl {

enum class Activation { Relu, SoftmaxOutput };

/// Shape of one dense layer: weights are in_dim x out_dim, plus out_dim biases.
struct LayerShape {
    Activation activation = Activation::Relu;
    size_t in_dim = 0;
    size_t out_dim = 0;

    size_t param_count() const { return in_dim * out_dim + out_dim; }
    bool operator==(const LayerShape&) const = default;
};

/// Flat model parameters plus the per-layer shape metadata that makes the
/// flat vector interpretable. This is the unit of aggregation, perturbation
/// and transfer throughout the simulator.
///
/// Layout: for each layer in order, the row-major weight matrix followed by
/// the bias vector.
struct ParamVector {
    std::vector<double> values;
    std::vector<LayerShape> shapes;

    ParamVector() = default;
    ParamVector(std::vector<double> v, std::vector<LayerShape> s);

    static ParamVector zeros(const std::vector<LayerShape>& shapes);

    size_t size() const { return values.size(); }
    bool same_shapes(const ParamVector& o) const { return shapes == o.shapes; }
    bool all_finite() const;

    // Offset of layer i's parameters inside `values`.
    size_t layer_offset(size_t i) const;

    double* layer_data(size_t i) { return values.data() + layer_offset(i); }
    const double* layer_data(size_t i) const { return values.data() + layer_offset(i); }
};

size_t total_param_count(const std::vector<LayerShape>& shapes);
std::string shape_to_string(const LayerShape& s);

}  // namespace hiersfl
