#include "regroup/io.hpp"

#include <cmath>
#include <fstream>
#include <iterator>
#include <type_traits>

#include "binary.hpp"
#include "regroup/error.hpp"

namespace regroup {

using detail::ByteReader;
using detail::ByteWriter;

namespace {

constexpr std::uint32_t kIdxImages = 0x00000803;
constexpr std::uint32_t kIdxLabels = 0x00000801;
constexpr std::size_t kCifarRecord = 3073;

void put_f32_array(ByteWriter& w, const std::vector<double>& values) {
    for (double v : values) {
        w.f32(static_cast<float>(v));
    }
}

std::vector<double> get_f32_array(ByteReader& r, std::size_t count) {
    std::vector<double> out(count);
    for (auto& v : out) {
        const float f = r.f32();
        if (!std::isfinite(f)) {
            r.fail("non-finite parameter");
        }
        v = f;
    }
    return out;
}

std::uint32_t checked_u32(std::size_t v, const char* what) {
    if (v > 0xFFFFFFFFull) {
        throw ValidationError(std::string(what) + " does not fit in 32 bits");
    }
    return static_cast<std::uint32_t>(v);
}

} // namespace

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) {
        throw IoError("error reading " + path.string());
    }
    return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw IoError("error writing " + path.string());
    }
}

LabeledDataset load_mnist(const std::filesystem::path& images, const std::filesystem::path& labels,
                          Provenance provenance) {
    const auto image_bytes = read_file(images);
    const auto label_bytes = read_file(labels);
    ByteReader ir(image_bytes, images.string());
    ByteReader lr(label_bytes, labels.string());
    if (ir.get<std::uint32_t>(std::endian::big) != kIdxImages) {
        ir.fail("bad magic (expected 0x00000803)");
    }
    if (lr.get<std::uint32_t>(std::endian::big) != kIdxLabels) {
        lr.fail("bad magic (expected 0x00000801)");
    }
    const std::uint32_t count = ir.get<std::uint32_t>(std::endian::big);
    const std::uint32_t rows = ir.get<std::uint32_t>(std::endian::big);
    const std::uint32_t cols = ir.get<std::uint32_t>(std::endian::big);
    const std::uint32_t label_count = lr.get<std::uint32_t>(std::endian::big);
    if (count != label_count) {
        throw ValidationError("MNIST count mismatch: " + std::to_string(count) + " images, " +
                              std::to_string(label_count) + " labels");
    }
    if (rows == 0 || cols == 0) {
        ir.fail("zero image extent");
    }
    const std::size_t pixels = static_cast<std::size_t>(rows) * cols;
    if (ir.remaining() != static_cast<std::size_t>(count) * pixels) {
        ir.fail(ir.remaining() < static_cast<std::size_t>(count) * pixels ? "truncated pixel data"
                                                                           : "trailing bytes after pixel data");
    }
    if (lr.remaining() != count) {
        lr.fail(lr.remaining() < count ? "truncated label data" : "trailing bytes after label data");
    }
    LabeledDataset data({1, rows, cols}, 10, provenance);
    std::vector<float> image(pixels);
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto raw = ir.take(pixels);
        for (std::size_t p = 0; p < pixels; ++p) {
            image[p] = static_cast<float>(raw[p]) / 255.0f;
        }
        const std::uint8_t label = lr.u8();
        if (label > 9) {
            lr.fail("label " + std::to_string(label) + " outside 0..9");
        }
        data.add(std::span<const float>(image), label);
    }
    return data;
}

LabeledDataset load_cifar10(std::span<const std::filesystem::path> batches, Provenance provenance) {
    LabeledDataset data({3, 32, 32}, 10, provenance);
    std::vector<float> image(kCifarRecord - 1);
    for (const auto& path : batches) {
        const auto bytes = read_file(path);
        if (bytes.empty() || bytes.size() % kCifarRecord != 0) {
            throw ValidationError(path.string() + ": length " + std::to_string(bytes.size()) +
                                  " is not a positive multiple of 3073");
        }
        for (std::size_t offset = 0; offset < bytes.size(); offset += kCifarRecord) {
            const std::uint8_t label = bytes[offset];
            if (label > 9) {
                throw ValidationError(path.string() + ": label " + std::to_string(label) + " outside 0..9");
            }
            // Planes R, G, B of 32x32 row-major already match C×H×W.
            for (std::size_t p = 0; p < image.size(); ++p) {
                image[p] = static_cast<float>(bytes[offset + 1 + p]) / 255.0f;
            }
            data.add(std::span<const float>(image), label);
        }
    }
    return data;
}

std::vector<std::uint8_t> encode_model(const NetworkModel& model) {
    ByteWriter w;
    w.magic("RGRPMODL");
    w.u32(kModelFormatVersion);
    for (auto extent : model.input_shape()) {
        w.u32(checked_u32(extent, "input extent"));
    }
    w.u32(checked_u32(model.num_classes(), "class count"));
    w.u32(checked_u32(model.layers().size(), "layer count"));
    for (const auto& layer : model.layers()) {
        w.u8(static_cast<std::uint8_t>(kind_of(layer)));
        std::visit(
            [&](const auto& spec) {
                using T = std::decay_t<decltype(spec)>;
                if constexpr (std::is_same_v<T, Conv2d>) {
                    w.u32(checked_u32(spec.in_channels, "channels"));
                    w.u32(checked_u32(spec.out_channels, "channels"));
                    w.u32(checked_u32(spec.kernel_h, "kernel"));
                    w.u32(checked_u32(spec.kernel_w, "kernel"));
                    w.u32(checked_u32(spec.stride, "stride"));
                    w.u32(checked_u32(spec.padding, "padding"));
                    put_f32_array(w, spec.weights);
                    put_f32_array(w, spec.bias);
                } else if constexpr (std::is_same_v<T, Linear>) {
                    w.u32(checked_u32(spec.in_features, "features"));
                    w.u32(checked_u32(spec.out_features, "features"));
                    put_f32_array(w, spec.weights);
                    put_f32_array(w, spec.bias);
                } else if constexpr (std::is_same_v<T, MaxPool2d>) {
                    w.u32(checked_u32(spec.window, "window"));
                    w.u32(checked_u32(spec.stride, "stride"));
                }
            },
            layer);
    }
    return w.take();
}

NetworkModel decode_model(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes, "model");
    r.expect_magic("RGRPMODL");
    const std::uint32_t version = r.u32();
    if (version != kModelFormatVersion) {
        r.fail("unsupported version " + std::to_string(version));
    }
    Shape input{r.u32(), r.u32(), r.u32()};
    const std::uint32_t classes = r.u32();
    const std::uint32_t count = r.u32();
    if (count == 0) {
        r.fail("empty layer list");
    }
    std::vector<LayerSpec> layers;
    layers.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint8_t code = r.u8();
        switch (static_cast<LayerKind>(code)) {
        case LayerKind::conv2d: {
            Conv2d c;
            c.in_channels = r.u32();
            c.out_channels = r.u32();
            c.kernel_h = r.u32();
            c.kernel_w = r.u32();
            c.stride = r.u32();
            c.padding = r.u32();
            const std::size_t n = c.out_channels * c.in_channels * c.kernel_h * c.kernel_w;
            if (n * 4 > r.remaining()) {
                r.fail("layer " + std::to_string(i) + ": truncated conv2d weights");
            }
            c.weights = get_f32_array(r, n);
            c.bias = get_f32_array(r, c.out_channels);
            layers.emplace_back(std::move(c));
            break;
        }
        case LayerKind::linear: {
            Linear l;
            l.in_features = r.u32();
            l.out_features = r.u32();
            const std::size_t n = l.in_features * l.out_features;
            if (n * 4 > r.remaining()) {
                r.fail("layer " + std::to_string(i) + ": truncated linear weights");
            }
            l.weights = get_f32_array(r, n);
            l.bias = get_f32_array(r, l.out_features);
            layers.emplace_back(std::move(l));
            break;
        }
        case LayerKind::relu: layers.emplace_back(Relu{}); break;
        case LayerKind::maxpool2d: {
            MaxPool2d p;
            p.window = r.u32();
            p.stride = r.u32();
            layers.emplace_back(p);
            break;
        }
        case LayerKind::flatten: layers.emplace_back(Flatten{}); break;
        default: r.fail("layer " + std::to_string(i) + ": unknown kind code " + std::to_string(code));
        }
    }
    r.expect_end();
    return NetworkModel(std::move(input), classes, std::move(layers));
}

void save_model(const NetworkModel& model, const std::filesystem::path& path) {
    write_file(path, encode_model(model));
}

NetworkModel load_model(const std::filesystem::path& path) {
    return decode_model(read_file(path));
}

std::vector<std::uint8_t> encode_ensemble(const GenerativeEnsemble& ensemble) {
    ByteWriter w;
    w.magic("RGRPENSB");
    w.u32(kEnsembleFormatVersion);
    w.f64(ensemble.delta());
    w.u32(checked_u32(ensemble.num_classes(), "class count"));
    w.u32(checked_u32(ensemble.num_layers(), "layer count"));
    w.u32(checked_u32(ensemble.selected_k().value_or(0), "k"));
    for (const auto& layer : ensemble.layers()) {
        w.u32(checked_u32(layer.layer_index, "layer index"));
        w.u32(checked_u32(layer.dim, "layer dimension"));
        for (double v : layer.positive) {
            w.f64(v);
        }
        for (double v : layer.negative) {
            w.f64(v);
        }
    }
    return w.take();
}

GenerativeEnsemble decode_ensemble(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes, "ensemble");
    r.expect_magic("RGRPENSB");
    const std::uint32_t version = r.u32();
    if (version != kEnsembleFormatVersion) {
        r.fail("unsupported version " + std::to_string(version));
    }
    const double delta = r.f64();
    const std::uint32_t classes = r.u32();
    const std::uint32_t count = r.u32();
    const std::uint32_t k = r.u32();
    std::vector<LayerClassifier> layers(count);
    for (auto& layer : layers) {
        layer.layer_index = r.u32();
        layer.dim = r.u32();
        const std::size_t n = static_cast<std::size_t>(classes) * layer.dim;
        if (2 * n * 8 > r.remaining()) {
            r.fail("truncated layer matrices");
        }
        layer.positive.resize(n);
        layer.negative.resize(n);
        for (double& v : layer.positive) {
            v = r.f64();
        }
        for (double& v : layer.negative) {
            v = r.f64();
        }
    }
    r.expect_end();
    GenerativeEnsemble ensemble(classes, delta, std::move(layers));
    if (k != 0) {
        ensemble.set_selected_k(k);
    }
    return ensemble;
}

void save_ensemble(const GenerativeEnsemble& ensemble, const std::filesystem::path& path) {
    write_file(path, encode_ensemble(ensemble));
}

GenerativeEnsemble load_ensemble(const std::filesystem::path& path) {
    return decode_ensemble(read_file(path));
}

std::vector<std::uint8_t> encode_adversarial_set(std::span<const AdversarialRecord> records) {
    ByteWriter w;
    w.magic("RGRPADVX");
    w.u32(kAdversarialFormatVersion);
    w.u32(checked_u32(records.size(), "record count"));
    for (const auto& rec : records) {
        w.u32(checked_u32(rec.source_index, "source index"));
        w.u32(checked_u32(rec.true_label, "label"));
        w.u32(rec.target ? checked_u32(*rec.target, "target") : kUntargeted);
        w.u8(rec.success ? 1 : 0);
        w.f32(static_cast<float>(rec.confidence));
        put_f32_array(w, rec.image.storage());
    }
    return w.take();
}

std::vector<AdversarialRecord> decode_adversarial_set(std::span<const std::uint8_t> bytes,
                                                      const Shape& image_shape) {
    ByteReader r(bytes, "adversarial set");
    r.expect_magic("RGRPADVX");
    const std::uint32_t version = r.u32();
    if (version != kAdversarialFormatVersion) {
        r.fail("unsupported version " + std::to_string(version));
    }
    const std::uint32_t count = r.u32();
    const std::size_t pixels = shape_volume(image_shape);
    const std::size_t record_bytes = 4 + 4 + 4 + 1 + 4 + 4 * pixels;
    if (r.remaining() != static_cast<std::size_t>(count) * record_bytes) {
        r.fail("length does not match " + std::to_string(count) + " records of shape " +
               shape_to_string(image_shape));
    }
    std::vector<AdversarialRecord> records(count);
    for (auto& rec : records) {
        rec.source_index = r.u32();
        rec.true_label = r.u32();
        const std::uint32_t target = r.u32();
        if (target != kUntargeted) {
            rec.target = target;
        }
        const std::uint8_t success = r.u8();
        if (success > 1) {
            r.fail("success flag must be 0 or 1");
        }
        rec.success = success == 1;
        rec.confidence = r.f32();
        rec.image = Tensor(image_shape, get_f32_array(r, pixels));
        for (double v : rec.image.values()) {
            if (v < 0.0 || v > 1.0) {
                r.fail("pixel outside [0,1]");
            }
        }
    }
    return records;
}

void save_adversarial_set(std::span<const AdversarialRecord> records, const std::filesystem::path& path) {
    write_file(path, encode_adversarial_set(records));
}

std::vector<AdversarialRecord> load_adversarial_set(const std::filesystem::path& path, const Shape& image_shape) {
    return decode_adversarial_set(read_file(path), image_shape);
}

} // namespace regroup
