#include "sparsekan/checkpoint.hpp"

#include <json.hpp>

#include <fstream>
#include <stdexcept>

namespace sparsekan {

namespace {

using nlohmann::json;

constexpr int kFormatVersion = 1;

json shape_to_json(const KanShape& s) {
    json kinds = json::array();
    for (const auto& layer : s.node_kinds) {
        json row = json::array();
        for (NodeKind k : layer) row.push_back(k == NodeKind::sum ? "sum" : "product");
        kinds.push_back(std::move(row));
    }
    return json{{"widths", s.widths},
                {"node_kinds", std::move(kinds)},
                {"forward_connections", s.forward_connections}};
}

KanShape shape_from_json(const json& j) {
    KanShape s;
    s.widths = j.at("widths").get<std::vector<int>>();
    s.forward_connections = j.at("forward_connections").get<bool>();
    for (const auto& row : j.at("node_kinds")) {
        std::vector<NodeKind> kinds;
        for (const auto& k : row) {
            std::string name = k.get<std::string>();
            if (name == "sum")
                kinds.push_back(NodeKind::sum);
            else if (name == "product")
                kinds.push_back(NodeKind::product);
            else
                throw std::runtime_error("unknown node kind '" + name + "'");
        }
        s.node_kinds.push_back(std::move(kinds));
    }
    return s;
}

}  // namespace

void save_network(const GatedKan& net, const std::string& path) {
    net.validate();
    json j;
    j["format_version"] = kFormatVersion;
    j["shape"] = shape_to_json(net.shape);
    j["gate_params"] = {{"tau", net.egates.params.tau},
                        {"gamma", net.egates.params.gamma},
                        {"zeta", net.egates.params.zeta}};
    j["egates"] = {{"logits", net.egates.logits}, {"trainable", net.egates.trainable}};
    j["ngates"] = {{"enabled", net.ngates_enabled},
                   {"logits", net.ngates.logits},
                   {"trainable", net.ngates.trainable}};
    json layers = json::array();
    for (const auto& layer : net.edges) {
        json edges = json::array();
        for (const auto& act : layer) {
            edges.push_back(json{{"grid",
                                  {{"num_intervals", act.grid.num_intervals},
                                   {"degree", act.grid.degree},
                                   {"lo", act.grid.domain_lo},
                                   {"hi", act.grid.domain_hi}}},
                                 {"coeffs", act.coeffs},
                                 {"w_b", act.w_b},
                                 {"w_s", act.w_s}});
        }
        layers.push_back(std::move(edges));
    }
    j["edges"] = std::move(layers);

    std::ofstream out(path);
    if (!out) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");
    out << j.dump(1, '\t') << "\n";
    if (!out) throw std::runtime_error("checkpoint: write to '" + path + "' failed");
}

GatedKan load_network(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw std::runtime_error("checkpoint: '" + path + "' is not valid JSON: " + e.what());
    }
    try {
        int version = j.at("format_version").get<int>();
        if (version != kFormatVersion)
            throw std::runtime_error("unsupported format_version " + std::to_string(version));

        GatedKan net;
        net.shape = shape_from_json(j.at("shape"));
        GateParams params;
        params.tau = j.at("gate_params").at("tau").get<double>();
        params.gamma = j.at("gate_params").at("gamma").get<double>();
        params.zeta = j.at("gate_params").at("zeta").get<double>();
        net.egates.params = params;
        net.egates.logits = j.at("egates").at("logits").get<std::vector<double>>();
        net.egates.trainable = j.at("egates").at("trainable").get<bool>();
        net.ngates.params = params;
        net.ngates_enabled = j.at("ngates").at("enabled").get<bool>();
        net.ngates.logits = j.at("ngates").at("logits").get<std::vector<double>>();
        net.ngates.trainable = j.at("ngates").at("trainable").get<bool>();

        for (const auto& layer : j.at("edges")) {
            std::vector<SplineActivation> acts;
            for (const auto& e : layer) {
                SplineActivation act;
                const auto& g = e.at("grid");
                act.grid = SplineGrid::uniform(g.at("num_intervals").get<int>(),
                                               g.at("degree").get<int>(), g.at("lo").get<double>(),
                                               g.at("hi").get<double>());
                act.coeffs = e.at("coeffs").get<std::vector<double>>();
                act.w_b = e.at("w_b").get<double>();
                act.w_s = e.at("w_s").get<double>();
                acts.push_back(std::move(act));
            }
            net.edges.push_back(std::move(acts));
        }
        net.validate();
        return net;
    } catch (const json::exception& e) {
        throw std::runtime_error("checkpoint: '" + path + "' is missing or mistypes a field: " +
                                 e.what());
    } catch (const std::invalid_argument& e) {
        throw std::runtime_error("checkpoint: '" + path + "' fails validation: " + e.what());
    }
}

}  // namespace sparsekan
