#include "hfcloud/hfcnn.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "hfcloud/binio.hpp"
#include "hfcloud/error.hpp"
#include "hfcloud/rng.hpp"

namespace hfcloud {

using nlohmann::json;

void TrainConfig::validate() const {
  if (!(lr >= 0.0)) throw Error(Errc::config, "lr must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw Error(Errc::config, "momentum must lie in [0,1)");
  if (max_iterations < 0) throw Error(Errc::config, "max_iterations must be >= 0");
  if (batch_size < 1) throw Error(Errc::config, "batch_size must be >= 1");
}

template <typename T>
void HfcnnParams<T>::zero() {
  for (auto* p : all()) std::fill(p->begin(), p->end(), T(0));
}

template <typename T>
Hfcnn<T>::Hfcnn() {
  params.conv1_w.assign(kConv1.weight_count(), T(0));
  params.conv1_b.assign(kConv1.out_c, T(0));
  params.conv2_w.assign(kConv2.weight_count(), T(0));
  params.conv2_b.assign(kConv2.out_c, T(0));
  params.conv3_w.assign(kConv3.weight_count(), T(0));
  params.conv3_b.assign(kConv3.out_c, T(0));
  params.fc_w.assign(static_cast<std::size_t>(kClasses) * kFeatureDim, T(0));
  params.fc_b.assign(kClasses, T(0));
}

template <typename T>
Hfcnn<T> Hfcnn<T>::initialized(std::uint64_t seed) {
  Hfcnn net;
  net.seed = seed;
  Rng rng(derive_seed(seed, 0x4846434eull));
  auto he_uniform = [&](std::vector<T>& w, int fan_in) {
    const double limit = std::sqrt(6.0 / fan_in);
    for (auto& v : w) v = static_cast<T>(uniform(rng, -limit, limit));
  };
  he_uniform(net.params.conv1_w, kConv1.in_c * kConv1.k * kConv1.k);
  he_uniform(net.params.conv2_w, kConv2.in_c * kConv2.k * kConv2.k);
  he_uniform(net.params.conv3_w, kConv3.in_c * kConv3.k * kConv3.k);
  he_uniform(net.params.fc_w, kFeatureDim);
  return net;
}

template <typename T>
Tensor<T> fuse_features(const Tensor<T>& f1, const Tensor<T>& f2, const Tensor<T>& f3) {
  const int b = f1.n();
  require_shape(f1, {b, 32, 32, 32}, "fuse_features f1");
  require_shape(f2, {b, 32, 16, 16}, "fuse_features f2");
  require_shape(f3, {b, 64, 8, 8}, "fuse_features f3");
  Tensor<T> up2, up3, out;
  nn::upsample_nearest_forward(f2, 2, up2);
  nn::upsample_nearest_forward(f3, 4, up3);
  const Tensor<T>* parts[] = {&f1, &up2, &up3};
  nn::concat_channels_forward<T>(parts, out);
  return out;
}

template <typename T>
void fuse_features_backward(const Tensor<T>& grad_fused, Tensor<T>& g1, Tensor<T>& g2, Tensor<T>& g3) {
  const int b = grad_fused.n();
  require_shape(grad_fused, {b, 128, 32, 32}, "fuse_features gradient");
  g1 = Tensor<T>(b, 32, 32, 32);
  Tensor<T> up2(b, 32, 32, 32), up3(b, 64, 32, 32);
  Tensor<T>* parts[] = {&g1, &up2, &up3};
  nn::concat_channels_backward<T>(grad_fused, parts);
  nn::upsample_nearest_backward(up2, 2, g2);
  nn::upsample_nearest_backward(up3, 4, g3);
}

template <typename T>
void Hfcnn<T>::forward(const Tensor<T>& batch, HfcnnCache<T>& c) const {
  require_shape(batch, {-1, 3, 32, 32}, "hfcnn input");
  const auto& p = params;
  c.input = batch;
  for (auto& v : c.input.data) v = (v - T(kInputMean)) / T(kInputStd);
  nn::conv2d_forward<T>(c.input, p.conv1_w, p.conv1_b, kConv1, c.conv1);
  nn::relu_forward(c.conv1, c.f1);
  nn::maxpool_forward(c.f1, kPool, c.pool1, c.pool1_argmax);
  nn::conv2d_forward<T>(c.pool1, p.conv2_w, p.conv2_b, kConv2, c.conv2);
  nn::relu_forward(c.conv2, c.f2);
  nn::avgpool_forward(c.f2, kPool, c.pool2);
  nn::conv2d_forward<T>(c.pool2, p.conv3_w, p.conv3_b, kConv3, c.conv3);
  nn::relu_forward(c.conv3, c.f3);
  c.fused = fuse_features(c.f1, c.f2, c.f3);
  nn::gap_forward(c.fused, c.features);
  nn::linear_forward<T>(c.features, p.fc_w, p.fc_b, kClasses, c.logits);
  nn::softmax(c.logits, c.probs);
}

template <typename T>
typename Hfcnn<T>::Output Hfcnn<T>::forward(const Tensor<T>& batch) const {
  HfcnnCache<T> cache;
  forward(batch, cache);
  return {std::move(cache.probs), std::move(cache.features)};
}

template <typename T>
T Hfcnn<T>::loss_and_gradients(const Tensor<T>& batch, std::span<const int> labels, HfcnnParams<T>& g,
                               HfcnnCache<T>& c) const {
  if (labels.size() != static_cast<std::size_t>(batch.n())) throw Error(Errc::shape_mismatch, "labels/batch size");
  forward(batch, c);
  if (g.conv1_w.size() != params.conv1_w.size()) g = Hfcnn<T>().params;
  g.zero();
  const auto& p = params;

  Tensor<T> g_logits, probs;
  const T loss = nn::softmax_cross_entropy(c.logits, labels, probs, g_logits);

  Tensor<T> g_feat, g_fused, g1, g2, g3, tmp, g_pool2, g_pool1;
  nn::linear_backward<T>(c.features, p.fc_w, kClasses, g_logits, &g_feat, g.fc_w, g.fc_b);
  g_fused = Tensor<T>(c.fused.n(), c.fused.c(), c.fused.h(), c.fused.w());
  nn::gap_backward(g_feat, g_fused);
  fuse_features_backward(g_fused, g1, g2, g3);

  // Stage 3 feeds only the fusion head.
  nn::relu_backward(c.f3, g3, tmp);
  nn::conv2d_backward<T>(c.pool2, p.conv3_w, kConv3, tmp, &g_pool2, g.conv3_w, g.conv3_b);

  // Stage 2 receives gradient from the head and from conv3 via the avg pool.
  Tensor<T> g_f2 = Tensor<T>(c.f2.n(), c.f2.c(), c.f2.h(), c.f2.w());
  nn::avgpool_backward(g_pool2, kPool, g_f2);
  for (std::size_t i = 0; i < g_f2.size(); ++i) g_f2.data[i] += g2.data[i];
  nn::relu_backward(c.f2, g_f2, tmp);
  nn::conv2d_backward<T>(c.pool1, p.conv2_w, kConv2, tmp, &g_pool1, g.conv2_w, g.conv2_b);

  Tensor<T> g_f1 = Tensor<T>(c.f1.n(), c.f1.c(), c.f1.h(), c.f1.w());
  nn::maxpool_backward(g_pool1, c.pool1_argmax, g_f1);
  for (std::size_t i = 0; i < g_f1.size(); ++i) g_f1.data[i] += g1.data[i];
  nn::relu_backward(c.f1, g_f1, tmp);
  nn::conv2d_backward<T>(c.input, p.conv1_w, kConv1, tmp, nullptr, g.conv1_w, g.conv1_b);
  return loss;
}

template struct HfcnnParams<float>;
template struct HfcnnParams<double>;
template class Hfcnn<float>;
template class Hfcnn<double>;
template Tensor<float> fuse_features<float>(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&);
template Tensor<double> fuse_features<double>(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&);
template void fuse_features_backward<float>(const Tensor<float>&, Tensor<float>&, Tensor<float>&, Tensor<float>&);
template void fuse_features_backward<double>(const Tensor<double>&, Tensor<double>&, Tensor<double>&, Tensor<double>&);

SgdState make_sgd_state(const HfcnnModel& model) {
  SgdState s;
  s.velocity = model.params;
  s.velocity.zero();
  s.grads = s.velocity;
  return s;
}

float train_step(HfcnnModel& model, SgdState& state, const Tensor<float>& batch, std::span<const int> labels,
                 const TrainConfig& config) {
  config.validate();
  if (state.velocity.conv1_w.size() != model.params.conv1_w.size()) state = make_sgd_state(model);
  const float loss = model.loss_and_gradients(batch, labels, state.grads, state.cache);
  if (!std::isfinite(loss)) throw Error(Errc::divergence, "non-finite training loss");

  const float mom = static_cast<float>(config.momentum);
  const float lr = static_cast<float>(config.lr);
  auto theta = model.params.all();
  auto vel = state.velocity.all();
  auto grad = state.grads.all();
  for (std::size_t t = 0; t < theta.size(); ++t) {
    auto& th = *theta[t];
    auto& v = *vel[t];
    const auto& g = *grad[t];
    for (std::size_t i = 0; i < th.size(); ++i) {
      v[i] = mom * v[i] - lr * g[i];
      th[i] += v[i];
    }
  }
  ++model.iterations;
  return loss;
}

int argmax4(const float* p) {
  int best = 0;
  for (int k = 1; k < 4; ++k)
    if (p[k] > p[best]) best = k;
  return best;
}

TrainHistory train(HfcnnModel& model, const TensorBatch& data, const TrainConfig& config, const TrainProgress& progress) {
  config.validate();
  const int n = data.images.n();
  if (n == 0) throw Error(Errc::invalid_argument, "empty training set");
  if (data.labels.size() != static_cast<std::size_t>(n)) throw Error(Errc::shape_mismatch, "labels/images count");

  Rng rng(derive_seed(config.seed, 0x5452414eull));
  std::vector<std::size_t> order(n);
  for (int i = 0; i < n; ++i) order[i] = static_cast<std::size_t>(i);
  shuffle(order, rng);
  std::size_t cursor = 0;

  SgdState state = make_sgd_state(model);
  TrainHistory history;
  history.loss.reserve(config.max_iterations);
  history.accuracy.reserve(config.max_iterations);

  const int bs = std::min(config.batch_size, n);
  Tensor<float> batch(bs, 3, 32, 32);
  std::vector<int> labels(bs);
  for (int it = 0; it < config.max_iterations; ++it) {
    for (int k = 0; k < bs; ++k) {
      if (cursor == order.size()) {
        shuffle(order, rng);
        cursor = 0;
      }
      const std::size_t idx = order[cursor++];
      std::copy_n(data.images.sample(static_cast<int>(idx)), batch.sample_size(), batch.sample(k));
      labels[k] = data.labels[idx];
    }
    const float loss = train_step(model, state, batch, labels, config);
    int correct = 0;
    for (int k = 0; k < bs; ++k) correct += argmax4(state.cache.probs.sample(k)) == labels[k];
    const float acc = static_cast<float>(correct) / static_cast<float>(bs);
    history.loss.push_back(loss);
    history.accuracy.push_back(acc);
    if (progress) progress(it, loss, acc);
  }
  return history;
}

HfcnnModel::Output predict_chunked(const HfcnnModel& model, const Tensor<float>& images, int chunk) {
  const int n = images.n();
  HfcnnModel::Output out{Tensor<float>(n, 4, 1, 1), Tensor<float>(n, HfcnnModel::kFeatureDim, 1, 1)};
  for (int start = 0; start < n; start += chunk) {
    const int m = std::min(chunk, n - start);
    Tensor<float> part(m, 3, 32, 32);
    std::copy_n(images.sample(start), part.size(), part.data.data());
    const auto o = model.forward(part);
    std::copy(o.probs.data.begin(), o.probs.data.end(), out.probs.sample(start));
    std::copy(o.features.data.begin(), o.features.data.end(), out.features.sample(start));
  }
  return out;
}

double accuracy(const HfcnnModel& model, const TensorBatch& data, int chunk) {
  const int n = data.images.n();
  if (n == 0) return 0.0;
  const auto out = predict_chunked(model, data.images, chunk);
  int correct = 0;
  for (int i = 0; i < n; ++i) correct += argmax4(out.probs.sample(i)) == data.labels[i];
  return static_cast<double>(correct) / n;
}

namespace {

json shape_header(const HfcnnModel& model) {
  auto conv = [](const nn::ConvSpec& s) { return json::array({s.out_c, s.in_c, s.k, s.k}); };
  json layers = json::array();
  const std::array<json, 8> shapes = {conv(HfcnnModel::kConv1), json::array({32}),
                                      conv(HfcnnModel::kConv2), json::array({32}),
                                      conv(HfcnnModel::kConv3), json::array({64}),
                                      json::array({4, 128}),    json::array({4})};
  for (std::size_t i = 0; i < shapes.size(); ++i) layers.push_back({{"name", kHfcnnParamNames[i]}, {"shape", shapes[i]}});
  return {{"model", "hfcnn"},
          {"params", layers},
          {"seed", model.seed},
          {"iterations", model.iterations},
          {"feature_dim", HfcnnModel::kFeatureDim},
          {"classes", HfcnnModel::kClasses}};
}

}  // namespace

std::vector<std::uint8_t> serialize(const HfcnnModel& model) {
  binio::Writer w;
  w.bytes("HFCN");
  w.u8(kHfcnnFormatVersion);
  const std::string header = shape_header(model).dump();
  w.u32(static_cast<std::uint32_t>(header.size()));
  w.bytes(header);
  for (const auto* p : model.params.all())
    for (float v : *p) w.f32(v);
  return std::move(w).data();
}

HfcnnModel deserialize_hfcnn(std::span<const std::uint8_t> bytes) {
  binio::Reader r(bytes);
  if (r.bytes(4) != "HFCN") throw Error(Errc::bad_magic, "not an HFCN model");
  const auto version = r.u8();
  if (version > kHfcnnFormatVersion || version == 0)
    throw Error(Errc::unsupported_version, "HFCN version " + std::to_string(version));
  const auto header_len = r.u32();
  json header;
  try {
    header = json::parse(r.bytes(header_len));
  } catch (const json::exception& e) {
    throw Error(Errc::corrupt_metadata, std::string("HFCN header: ") + e.what());
  }
  HfcnnModel model;
  try {
    const auto& layers = header.at("params");
    const auto expected = shape_header(model).at("params");
    if (layers != expected) throw Error(Errc::shape_mismatch, "HFCN parameter shapes differ from this build");
    model.seed = header.at("seed").get<std::uint64_t>();
    model.iterations = header.at("iterations").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw Error(Errc::corrupt_metadata, std::string("HFCN header: ") + e.what());
  }
  for (auto* p : model.params.all())
    for (auto& v : *p) v = r.f32();
  return model;
}

void save_hfcnn(const HfcnnModel& model, const std::string& path) { binio::write_file(path, serialize(model)); }

HfcnnModel load_hfcnn(const std::string& path) { return deserialize_hfcnn(binio::read_file(path)); }

}  // namespace hfcloud
