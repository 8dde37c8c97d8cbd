#pragma once

// Binds Service to cpp-httplib. Only this header pulls in the socket library.

#include <string>

#include <httplib.h>

#include "service.hpp"

namespace cohort {

inline void bind_service(httplib::Server& server, const Service& service) {
    auto forward = [&service](const httplib::Request& req, httplib::Response& res) {
        Service::Params params;
        for (const auto& [k, v] : req.params)
            params.emplace(k, v);
        auto r = service.handle(req.method, req.path, params, req.body);
        res.status = r.status;
        res.set_content(r.body.dump(), "application/json");
    };
    server.Get(R"(/api/.*)", forward);
    server.Post(R"(/api/.*)", forward);
    server.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
        if (!res.body.empty())
            return;
        auto r = Service::error(res.status, res.status == 404 ? "NOT_FOUND" : "HTTP_ERROR",
                                "no route for " + req.method + " " + req.path);
        res.set_content(r.body.dump(), "application/json");
    });
}

/// Splits "host:port"; throws ConfigError when the port is missing or bad.
inline std::pair<std::string, int> split_addr(const std::string& addr) {
    auto colon = addr.rfind(':');
    if (colon == std::string::npos || colon + 1 == addr.size())
        throw ConfigError("address must be HOST:PORT, got '" + addr + "'");
    int port = 0;
    try {
        std::size_t used = 0;
        port = std::stoi(addr.substr(colon + 1), &used);
        if (used != addr.size() - colon - 1)
            throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
        throw ConfigError("bad port in '" + addr + "'");
    }
    if (port < 0 || port > 65535)
        throw ConfigError("port out of range in '" + addr + "'");
    return {addr.substr(0, colon), port};
}

} // namespace cohort
