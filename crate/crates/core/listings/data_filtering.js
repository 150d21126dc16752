jdata {
   	int tempSensors as logger(device);
   	int vehicleTemps as logger(fog);
   	int areaAverage as logger(cloud);
}
jcond {
   	deviceOnly: sys.type == "device";
   	fogOnly: sys.type == "fog";
}
jasync function {deviceOnly} vehicleTempFinder() {
   	var connectedDevices = tempSensors.size();
   	var lowestValue = tempSensors[0].getLastValue();
   	for(var i = 0; i < connectedDevices; i++) {
      		var sensorTemp =
        		connectedDevices[i].getLastValue();
        		if(sensorTemp < lowestValue) {
          		lowestValue = sensorTemp;
        		}
   	}
   	vehicleTemps = lowestValue;
}
jasync function {fogOnly} areaAverageCalculate() {
   	var connectedVehicles = vehicleTemps.size();
   	var sum = 0;
   	for(var i = 0; i < connectedVehicles; i++) {
      		sum += vehicleTemps[i].getLastValue();
   	}
   	areaAverage = sum / connectedVehicles;
}
