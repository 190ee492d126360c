#include "pguide/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "pguide/errors.hpp"

namespace pguide {

using nlohmann::json;

json tensor_to_json(const Tensor2& t) {
    return json{{"rows", t.rows()}, {"cols", t.cols()}, {"data", t.data()}};
}

Tensor2 tensor_from_json(const json& j) {
    return Tensor2(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
                   j.at("data").get<std::vector<double>>());
}

json prior_to_json(const PriorModel& model, const json& config_echo) {
    return json{{"magic", kPriorMagic},
                {"num_classes", model.num_classes},
                {"dim", model.dim},
                {"variance_mode", std::string(to_string(model.variance_mode))},
                {"mu", tensor_to_json(model.mu.value)},
                {"log_sigma", tensor_to_json(model.log_sigma.value)},
                {"config", config_echo}};
}

PriorModel prior_from_json(const json& j) {
    if (!j.is_object() || j.value("magic", std::string()) != kPriorMagic) {
        throw FormatError("prior checkpoint: missing or wrong magic (expected " +
                          std::string(kPriorMagic) + ")");
    }
    PriorModel m = PriorModel::create(j.at("num_classes").get<int>(), j.at("dim").get<int>(),
                                      variance_mode_from_string(j.at("variance_mode").get<std::string>()));
    Tensor2 mu = tensor_from_json(j.at("mu"));
    Tensor2 ls = tensor_from_json(j.at("log_sigma"));
    if (!mu.same_shape(m.mu.value) || !ls.same_shape(m.log_sigma.value)) {
        throw FormatError("prior checkpoint: table shapes do not match header");
    }
    m.mu.value = std::move(mu);
    m.log_sigma.value = std::move(ls);
    return m;
}

json flow_to_json(const VelocityNet& net, const json& config_echo) {
    const auto& c = net.config();
    json params = json::array();
    for (const auto* p : net.params()) {
        json t = tensor_to_json(p->value);
        t["name"] = p->name;
        params.push_back(std::move(t));
    }
    return json{{"magic", kFlowMagic},
                {"net",
                 {{"dim", c.dim},
                  {"num_classes", c.num_classes},
                  {"embed_dim", c.embed_dim},
                  {"fourier_pairs", c.fourier_pairs},
                  {"hidden", c.hidden}}},
                {"params", std::move(params)},
                {"config", config_echo}};
}

VelocityNet flow_from_json(const json& j) {
    if (!j.is_object() || j.value("magic", std::string()) != kFlowMagic) {
        throw FormatError("flow checkpoint: missing or wrong magic (expected " +
                          std::string(kFlowMagic) + ")");
    }
    const auto& n = j.at("net");
    VelocityNetConfig cfg;
    cfg.dim = n.at("dim").get<int>();
    cfg.num_classes = n.at("num_classes").get<int>();
    cfg.embed_dim = n.at("embed_dim").get<int>();
    cfg.fourier_pairs = n.at("fourier_pairs").get<int>();
    cfg.hidden = n.at("hidden").get<std::vector<int>>();
    Rng unused(0);
    VelocityNet net(cfg, unused);
    auto params = net.params();
    const auto& stored = j.at("params");
    if (stored.size() != params.size()) {
        throw FormatError("flow checkpoint: expected " + std::to_string(params.size()) +
                          " parameter blocks, found " + std::to_string(stored.size()));
    }
    for (std::size_t k = 0; k < params.size(); ++k) {
        if (stored[k].at("name").get<std::string>() != params[k]->name) {
            throw FormatError("flow checkpoint: unexpected block '" +
                              stored[k].at("name").get<std::string>() + "'");
        }
        Tensor2 t = tensor_from_json(stored[k]);
        if (!t.same_shape(params[k]->value)) {
            throw FormatError("flow checkpoint: block '" + params[k]->name + "' has shape " +
                              t.shape_string() + ", expected " +
                              params[k]->value.shape_string());
        }
        params[k]->value = std::move(t);
    }
    return net;
}

json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return json::parse(ss.str());
    } catch (const json::parse_error& e) {
        throw FormatError("invalid JSON in " + path.string() + ": " + e.what());
    }
}

void write_json_file(const std::filesystem::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(2) << '\n';
    if (!out) throw IoError("write failed for " + path.string());
}

namespace {

template <class F>
auto with_file_context(const std::filesystem::path& path, F&& f) {
    try {
        return f();
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": malformed checkpoint: " + e.what());
    } catch (const ShapeError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

}  // namespace

void save_prior(const std::filesystem::path& path, const PriorModel& model,
                const json& config_echo) {
    write_json_file(path, prior_to_json(model, config_echo));
}

PriorModel load_prior(const std::filesystem::path& path) {
    const json j = read_json_file(path);
    return with_file_context(path, [&] { return prior_from_json(j); });
}

void save_flow(const std::filesystem::path& path, const VelocityNet& net, const json& config_echo) {
    write_json_file(path, flow_to_json(net, config_echo));
}

VelocityNet load_flow(const std::filesystem::path& path) {
    const json j = read_json_file(path);
    return with_file_context(path, [&] { return flow_from_json(j); });
}

}  // namespace pguide
