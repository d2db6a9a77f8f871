#include "chase/types.hpp"

#include "chase/errors.hpp"

namespace chase {

InstanceCategory parse_category(const std::string& s) {
    if (s == "application") return InstanceCategory::application;
    if (s == "message") return InstanceCategory::message;
    if (s == "gateway") return InstanceCategory::gateway;
    if (s == "database") return InstanceCategory::database;
    if (s == "other") return InstanceCategory::other;
    throw UnknownCategory(s);
}

const char* category_name(InstanceCategory c) {
    switch (c) {
        case InstanceCategory::application: return "application";
        case InstanceCategory::message: return "message";
        case InstanceCategory::gateway: return "gateway";
        case InstanceCategory::database: return "database";
        case InstanceCategory::other: return "other";
    }
    return "other";
}

int InvocationGraph::index_of(const std::string& instance_id) const {
    for (int i = 0; i < num_instances(); ++i) {
        if (instances[i].id == instance_id) return i;
    }
    return -1;
}

} // namespace chase
