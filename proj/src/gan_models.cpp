#include "pbgan/gan_models.hpp"

#include <string>

namespace pbgan {

namespace {

Var apply_layer(const LayerSpec& l, const LayerVars& v, Var x) {
  Var y = l.kind == LayerKind::conv ? conv2d(x, v.filters, v.bias, l.stride, l.pad)
                                    : deconv2d(x, v.filters, v.bias, l.stride, l.pad);
  if (l.normalization == Normalization::instance) y = instance_norm(y);
  switch (l.activation) {
    case Activation::none: return y;
    case Activation::relu: return relu(y);
    case Activation::leaky_relu: return leaky_relu(y);
    case Activation::tanh: return tanh(y);
  }
  return y;
}

void check_image(const ModelSpec& spec, const Tensor& image, const char* what) {
  if (image.shape() != Shape{spec.height, spec.width, spec.channels}) {
    throw ShapeError(std::string(what) + " extents " + shape_str(image.shape()) + " do not match model input (" +
                     std::to_string(spec.height) + "," + std::to_string(spec.width) + "," +
                     std::to_string(spec.channels) + ")");
  }
}

std::vector<LayerVars> as_constants(Graph& g, const std::vector<DenseLayer>& layers) {
  std::vector<LayerVars> v;
  v.reserve(layers.size());
  for (const DenseLayer& l : layers) v.push_back({g.constant(l.filters), g.constant(l.bias)});
  return v;
}

}  // namespace

Var generator_forward(const ModelSpec& spec, std::span<const LayerVars> layers, Var image) {
  if (layers.size() != spec.generator.size()) throw ShapeError("generator_forward: layer count mismatch");
  std::vector<Var> outs;
  outs.reserve(layers.size());
  Var x = image;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& l = spec.generator[i];
    Var in = x;
    if (l.skip_from) {
      const Var parts[] = {x, outs[static_cast<std::size_t>(*l.skip_from)]};
      in = concat_last_axis(parts);
    }
    x = apply_layer(l, layers[i], in);
    outs.push_back(x);
  }
  return x;
}

Var discriminator_forward(const ModelSpec& spec, std::span<const LayerVars> layers, Var condition, Var image) {
  if (layers.size() != spec.discriminator.size()) throw ShapeError("discriminator_forward: layer count mismatch");
  const Var parts[] = {condition, image};
  Var x = concat_last_axis(parts);
  for (std::size_t i = 0; i < layers.size(); ++i) x = apply_layer(spec.discriminator[i], layers[i], x);
  return x;
}

GeneratorInstance build_generator(const RunState& run, int task_index) {
  const std::vector<TaskLayerParams>& shared = run.shared_params_for(task_index);
  const std::vector<DenseLayer>& specific = run.task_specific_for(task_index);
  const std::vector<int> shared_ids = run.spec.shared_layers();
  const std::vector<int> specific_ids = run.spec.task_specific_layers();
  if (shared.size() != shared_ids.size() || specific.size() != specific_ids.size()) {
    throw std::logic_error("task " + std::to_string(task_index) + " is missing layer parameters");
  }

  GeneratorInstance g{run.spec, task_index, std::vector<DenseLayer>(run.spec.generator.size())};
  for (std::size_t s = 0; s < shared_ids.size(); ++s) {
    const std::size_t l = static_cast<std::size_t>(shared_ids[s]);
    g.layers[l] = {compose_filters(run.banks[s], shared[s]).tensor(), shared[s].bias};
  }
  for (std::size_t s = 0; s < specific_ids.size(); ++s) {
    g.layers[static_cast<std::size_t>(specific_ids[s])] = specific[s];
  }
  for (std::size_t l = 0; l < g.layers.size(); ++l) {
    if (g.layers[l].filters.shape() != run.spec.generator[l].filter_shape()) {
      throw ShapeError("resolved filters of layer " + std::to_string(l) + " have extents " +
                       shape_str(g.layers[l].filters.shape()));
    }
  }
  return g;
}

DiscriminatorInstance build_discriminator(const RunState& run, int task_index) {
  return {run.spec, run.task(task_index).discriminator};
}

Tensor generate(const GeneratorInstance& g, const Tensor& image) {
  check_image(g.spec, image, "generator input");
  Graph graph;
  const std::vector<LayerVars> vars = as_constants(graph, g.layers);
  return generator_forward(g.spec, vars, graph.constant(image)).value();
}

Tensor discriminate(const DiscriminatorInstance& d, const Tensor& condition, const Tensor& image) {
  check_image(d.spec, condition, "condition");
  check_image(d.spec, image, "image");
  Graph graph;
  const std::vector<LayerVars> vars = as_constants(graph, d.layers);
  return discriminator_forward(d.spec, vars, graph.constant(condition), graph.constant(image)).value();
}

}  // namespace pbgan
